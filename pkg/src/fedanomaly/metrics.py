"""Ranking metrics: average precision over reconstruction losses.

Records are ranked by descending score (higher loss = more anomalous), ties
broken by ascending record index, and AP is the sum of precision at each
positive rank weighted by the recall increment there — i.e. every rank acts
as one threshold of the precision-recall curve.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Label
from .errors import EvalError, ShapeError
from .validation import as_vector


def _ranking(scores: np.ndarray) -> np.ndarray:
    # stable sort of -scores => descending scores, ties in ascending index order
    return np.argsort(-scores, kind="stable")


def _pr_walk(scores: np.ndarray, positives: np.ndarray):
    """Shared sort+scan. Returns (ap, thresholds, precisions, recalls)."""
    order = _ranking(scores)
    flags = positives[order]
    n_pos = int(flags.sum())
    if n_pos == 0:
        raise EvalError("average precision is undefined with zero positives")
    tp = np.cumsum(flags)
    ranks = np.arange(1, scores.shape[0] + 1)
    precision = tp / ranks
    recall = tp / n_pos
    ap = float(precision[flags].sum() / n_pos)
    return ap, scores[order], precision, recall


def average_precision(scores, positives) -> float:
    """AP of ranking `scores` descending against boolean `positives`.

    Raises EvalError when there are no positives; scores must be finite.
    """
    scores = as_vector(scores, "scores")
    positives = np.asarray(positives, dtype=bool)
    if positives.shape != scores.shape:
        raise ShapeError(
            f"scores {scores.shape} and positives {positives.shape} must align"
        )
    if not np.all(np.isfinite(scores)):
        raise EvalError("scores must be finite")
    ap, _, _, _ = _pr_walk(scores, positives)
    return ap


def pr_curve(scores, positives) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(thresholds, precisions, recalls), one point per rank."""
    scores = as_vector(scores, "scores")
    positives = np.asarray(positives, dtype=bool)
    if positives.shape != scores.shape:
        raise ShapeError(
            f"scores {scores.shape} and positives {positives.shape} must align"
        )
    _, thr, prec, rec = _pr_walk(scores, positives)
    return thr, prec, rec


@dataclass
class EvalReport:
    """AP summary plus the PR curves it was read off of.

    Per-class APs are None when that class is absent — never reported as 0.
    pr_curves maps class name -> dict of threshold/precision/recall arrays.
    """

    ap_all: float | None
    ap_global: float | None
    ap_local: float | None
    n_records: int
    n_global: int
    n_local: int
    seed: int | None = None
    other_class: str = "exclude"
    pr_curves: dict = field(default_factory=dict)

    def to_dict(self, include_curves: bool = True) -> dict:
        out = {
            "ap_all": self.ap_all,
            "ap_global": self.ap_global,
            "ap_local": self.ap_local,
            "n_records": self.n_records,
            "n_global": self.n_global,
            "n_local": self.n_local,
            "seed": self.seed,
            "other_class": self.other_class,
        }
        if include_curves:
            out["pr_curves"] = {
                name: {k: [float(v) for v in vals] for k, vals in curve.items()}
                for name, curve in self.pr_curves.items()
            }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        curves = {
            name: {k: np.asarray(v) for k, v in curve.items()}
            for name, curve in d.get("pr_curves", {}).items()
        }
        return cls(
            ap_all=d["ap_all"],
            ap_global=d["ap_global"],
            ap_local=d["ap_local"],
            n_records=d["n_records"],
            n_global=d["n_global"],
            n_local=d["n_local"],
            seed=d.get("seed"),
            other_class=d.get("other_class", "exclude"),
            pr_curves=curves,
        )


def _curve_dict(scores, positives) -> dict:
    thr, prec, rec = pr_curve(scores, positives)
    return {"threshold": thr, "precision": prec, "recall": rec}


def evaluate(
    losses,
    labels,
    other_class: str = "exclude",
    seed: int | None = None,
) -> EvalReport:
    """Score a labeled loss vector into AP_all / AP_global / AP_local.

    AP_all ranks every record with both anomaly classes positive. The
    per-class APs depend on `other_class`:
      "exclude"  — drop the other anomaly class from the ranking (default);
      "negative" — keep it, counted as a negative.
    A class with zero members yields None for its AP.
    """
    losses = as_vector(losses, "losses")
    labels = np.asarray(labels)
    if labels.shape != losses.shape:
        raise ShapeError(f"losses {losses.shape} and labels {labels.shape} must align")
    if other_class not in ("exclude", "negative"):
        raise EvalError(f"other_class must be 'exclude' or 'negative', got {other_class!r}")

    is_global = labels == Label.GLOBAL
    is_local = labels == Label.LOCAL
    any_anom = is_global | is_local
    n_global = int(is_global.sum())
    n_local = int(is_local.sum())

    curves: dict = {}
    ap_all = ap_global = ap_local = None
    if any_anom.any():
        ap_all, *_ = _pr_walk(losses, any_anom)
        curves["all"] = _curve_dict(losses, any_anom)

    def per_class(pos_mask, drop_mask, name):
        if not pos_mask.any():
            return None
        if other_class == "exclude":
            keep = ~drop_mask
            sub_scores, sub_pos = losses[keep], pos_mask[keep]
        else:
            sub_scores, sub_pos = losses, pos_mask
        ap, *_ = _pr_walk(sub_scores, sub_pos)
        curves[name] = _curve_dict(sub_scores, sub_pos)
        return ap

    ap_global = per_class(is_global, is_local, "global")
    ap_local = per_class(is_local, is_global, "local")

    return EvalReport(
        ap_all=ap_all,
        ap_global=ap_global,
        ap_local=ap_local,
        n_records=int(losses.shape[0]),
        n_global=n_global,
        n_local=n_local,
        seed=seed,
        other_class=other_class,
        pr_curves=curves,
    )


def write_report_json(report: EvalReport, path: str | Path, extra: dict | None = None) -> None:
    """Serialize an EvalReport (plus optional extra fields) as JSON."""
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_pr_curves_csv(report: EvalReport, path: str | Path) -> None:
    """Long-format CSV of every PR curve: class, threshold, precision, recall."""
    lines = ["class,threshold,precision,recall"]
    for name, curve in report.pr_curves.items():
        for t, p, r in zip(curve["threshold"], curve["precision"], curve["recall"]):
            lines.append(f"{name},{t!r},{p!r},{r!r}")
    Path(path).write_text("\n".join(lines) + "\n")
