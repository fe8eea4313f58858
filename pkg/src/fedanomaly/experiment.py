"""End-to-end experiment drivers: prepare, multi-seed training runs, sweeps.

Artifacts layout under the run output directory:

    dataset/                  encoded matrix + manifest (shared across seeds)
    seed_<s>/history.csv      one row per federated round
    seed_<s>/report.json      EvalReport (APs + PR curves)
    seed_<s>/checkpoint.*     final merged model (central public + client-0
                              private), plus optional periodic checkpoints
    run_result.json           per-seed metrics with mean/std summary

Sweeps nest the same layout per cell under cells/<cell-id>/ and add a
long-format sweep.csv for plotting. Everything is stamped with the config
digest; nothing written here contains timestamps, so identical configs
produce byte-identical artifacts (history elapsed-ms columns aside).
"""

from __future__ import annotations

import json
from dataclasses import replace
from itertools import product
from pathlib import Path

import numpy as np

from .config import (
    ExperimentConfig,
    config_digest,
    prep_digest,
)
from .data import PartitionPlan, inject_anomalies, load_csv, partition
from .dp import DpConfig
from .encoding import EncodedDataset, encode_dataset, load_dataset, save_dataset
from .errors import ConfigError, FedAnomalyError
from .federation import run_federation, write_history_csv
from .loss import ReconstructionLoss
from .metrics import EvalReport, evaluate, write_report_json
from .model import SplitMask, merge_params, save_checkpoint, score_dataset

SWEEP_COLUMNS = (
    "kind",
    "cell",
    "clip_norm",
    "noise_multiplier",
    "cut",
    "clients",
    "seed",
    "ap_all",
    "ap_global",
    "ap_local",
    "rounds_run",
    "config_digest",
    "error",
)


def _loss_for(cfg: ExperimentConfig, column_map) -> ReconstructionLoss:
    return ReconstructionLoss(
        column_map=column_map,
        categorical_weight=cfg.loss.categorical_weight,
        clamp_epsilon=cfg.loss.clamp_epsilon,
    )


def prepare_dataset(
    cfg: ExperimentConfig, out_dir: str | Path
) -> tuple[EncodedDataset, PartitionPlan, Path]:
    """Load, inject, encode, partition, persist. Returns the artifacts too.

    Injection and partitioning draw from streams tagged off dataset.seed, so
    the same config always produces a byte-identical dataset directory.
    """
    out_dir = Path(out_dir)
    raw = load_csv(cfg.dataset.csv_path, cfg.dataset.schema())
    injected = inject_anomalies(
        raw,
        n_global=cfg.anomalies.n_global,
        n_local=cfg.anomalies.n_local,
        seed=[cfg.dataset.seed, 0],
    )
    encoded = encode_dataset(injected)
    plan = partition(
        injected,
        mode=cfg.dataset.mode,
        gamma=cfg.federation.partitions,
        seed=[cfg.dataset.seed, 1],
    )
    dataset_dir = out_dir / "dataset"
    save_dataset(
        dataset_dir,
        encoded,
        plan,
        extra={
            "prep_digest": prep_digest(cfg),
            "config_digest": config_digest(cfg),
            "source_csv": str(cfg.dataset.csv_path),
            "dataset_seed": cfg.dataset.seed,
        },
    )
    return encoded, plan, dataset_dir


def _load_or_prepare(
    cfg: ExperimentConfig, out_dir: Path
) -> tuple[EncodedDataset, PartitionPlan]:
    dataset_dir = out_dir / "dataset"
    if (dataset_dir / "manifest.json").exists():
        encoded, plan, manifest = load_dataset(dataset_dir)
        if manifest.get("prep_digest") == prep_digest(cfg) and plan is not None:
            return encoded, plan
    encoded, plan, _ = prepare_dataset(cfg, out_dir)
    return encoded, plan


def _eval_view(cfg: ExperimentConfig, encoded: EncodedDataset, plan: PartitionPlan):
    if cfg.run.eval_scope == "client0":
        return encoded.rows(plan.indices(0))
    return encoded


def run_training(
    cfg: ExperimentConfig,
    out_dir: str | Path,
    seeds: tuple[int, ...] | None = None,
    dataset: tuple[EncodedDataset, PartitionPlan] | None = None,
) -> dict:
    """Train + evaluate once per seed; returns the RunResult dict.

    `seeds` overrides cfg.run.seeds (the --seed-override path); `dataset`
    short-circuits preparation when the caller already holds the artifacts
    (sweeps share one prepared dataset across cells).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = tuple(seeds) if seeds is not None else cfg.run.seeds
    digest = config_digest(cfg)

    if dataset is None:
        encoded, plan = _load_or_prepare(cfg, out_dir)
    else:
        encoded, plan = dataset
    if plan.gamma != cfg.federation.partitions:
        raise ConfigError(
            f"dataset was partitioned for {plan.gamma} clients but the config "
            f"says {cfg.federation.partitions}"
        )
    parts = [encoded.rows(idx) for idx in plan.all_indices()]
    loss = _loss_for(cfg, encoded.column_map)
    eval_data = _eval_view(cfg, encoded, plan)
    input_dim = encoded.n_features

    per_seed = []
    # run.jobs is accepted for interface stability; execution is sequential
    # (per-seed streams make ordering irrelevant to results)
    for s in seeds:
        seed_dir = out_dir / f"seed_{s}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        fed_cfg = cfg.federation_config(seed=s)
        every = cfg.run.checkpoint_every

        def on_round(record, central_public, clients, _dir=seed_dir, _seed=s):
            if every and record.round % every == 0:
                merged = merge_params(
                    central_public, clients[0].private, input_dim, cfg.split
                )
                save_checkpoint(
                    _dir / f"checkpoint_r{record.round:04d}",
                    merged,
                    input_dim,
                    cfg.split,
                    seed=_seed,
                    config_digest=digest,
                )

        result = run_federation(fed_cfg, parts, loss, on_round=on_round)
        merged = result.merged(client_id=0)
        losses = score_dataset(eval_data, merged, loss)
        report = evaluate(
            losses, eval_data.labels, other_class=cfg.run.other_class, seed=s
        )

        write_history_csv(result.history, seed_dir / "history.csv", config_digest=digest)
        write_report_json(
            report,
            seed_dir / "report.json",
            extra={"config_digest": digest, "eval_scope": cfg.run.eval_scope},
        )
        save_checkpoint(
            seed_dir / "checkpoint",
            merged,
            input_dim,
            cfg.split,
            seed=s,
            config_digest=digest,
        )
        per_seed.append(
            {
                "seed": s,
                "ap_all": report.ap_all,
                "ap_global": report.ap_global,
                "ap_local": report.ap_local,
                "rounds_run": len(result.history),
                "stopped_early": result.stopped_early,
                "final_mean_loss": result.history[-1].mean_loss,
                "report": f"seed_{s}/report.json",
                "history": f"seed_{s}/history.csv",
                "checkpoint": f"seed_{s}/checkpoint",
            }
        )

    def aggregate(key):
        values = [row[key] for row in per_seed]
        if any(v is None for v in values):
            return None, None
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if len(values) > 1 else None
        return mean, std

    mean = {}
    std = {}
    for key in ("ap_all", "ap_global", "ap_local"):
        mean[key], std[key] = aggregate(key)

    result_dict = {
        "kind": "run-result",
        "config_digest": digest,
        "eval_scope": cfg.run.eval_scope,
        "other_class": cfg.run.other_class,
        "n_records_scored": eval_data.n_records,
        "seeds": list(seeds),
        "per_seed": per_seed,
        "mean": mean,
        "std": std,
        "dataset_dir": "dataset" if dataset is None else None,
    }
    with open(out_dir / "run_result.json", "w", encoding="utf-8") as fh:
        json.dump(result_dict, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return result_dict


# --------------------------------------------------------------------------
# sweeps


def _format_value(v) -> str:
    return f"{v:g}" if isinstance(v, float) else str(v)


def sweep_cells(cfg: ExperimentConfig) -> list[dict]:
    """Expand the sweep grid into per-cell override dicts (stable order)."""
    grid = cfg.sweep
    if grid.is_empty():
        raise ConfigError("cmd_sweep needs a non-empty [sweep] section")
    axes: list[tuple[str, tuple]] = []
    if grid.clip_norms:
        axes.append(("clip_norm", grid.clip_norms))
    if grid.noise_multipliers:
        axes.append(("noise_multiplier", grid.noise_multipliers))
    if grid.cuts:
        axes.append(("cut", grid.cuts))
    if grid.clients:
        axes.append(("clients", grid.clients))
    cells = []
    for combo in product(*(values for _, values in axes)):
        overrides = dict(zip((name for name, _ in axes), combo))
        slug = "_".join(
            f"{name.replace('_', '')}{_format_value(v)}"
            for name, v in overrides.items()
        )
        cells.append({"cell": slug, **overrides})
    return cells


def cell_config(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply one sweep cell to the base config. Sweeping a DP knob turns the
    mechanism on in that cell; other knobs pass through unchanged."""
    dp = cfg.dp
    if "clip_norm" in overrides or "noise_multiplier" in overrides:
        dp = DpConfig(
            clip_norm=overrides.get("clip_norm", dp.clip_norm),
            noise_multiplier=overrides.get("noise_multiplier", dp.noise_multiplier),
            enabled=True,
        )
    split = cfg.split
    if "cut" in overrides:
        split = SplitMask(
            cut_encoder=overrides["cut"], cut_decoder=overrides["cut"]
        )
    federation = cfg.federation
    if "clients" in overrides:
        federation = replace(federation, clients=overrides["clients"])
    return replace(cfg, dp=dp, split=split, federation=federation)


def run_sweep(
    cfg: ExperimentConfig,
    out_dir: str | Path,
    seeds: tuple[int, ...] | None = None,
) -> tuple[list[dict], int]:
    """Run every cell; returns (rows written to sweep.csv, failed cell count).

    A failing cell is recorded and the sweep continues — the caller maps a
    nonzero failure count to the partial-failure exit code.
    """
    import csv

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = sweep_cells(cfg)
    encoded, plan = _load_or_prepare(cfg, out_dir)

    rows: list[dict] = []
    n_failed = 0
    for cell in cells:
        overrides = {k: v for k, v in cell.items() if k != "cell"}
        base_row = {
            "cell": cell["cell"],
            "clip_norm": overrides.get("clip_norm", ""),
            "noise_multiplier": overrides.get("noise_multiplier", ""),
            "cut": overrides.get("cut", ""),
            "clients": overrides.get("clients", ""),
        }
        try:
            ccfg = cell_config(cfg, overrides)
            result = run_training(
                ccfg,
                out_dir / "cells" / cell["cell"],
                seeds=seeds,
                dataset=(encoded, plan),
            )
        except FedAnomalyError as exc:
            n_failed += 1
            rows.append(
                {
                    **base_row,
                    "kind": "failed",
                    "seed": "",
                    "ap_all": "",
                    "ap_global": "",
                    "ap_local": "",
                    "rounds_run": "",
                    "config_digest": "",
                    "error": str(exc),
                }
            )
            continue
        for seed_row in result["per_seed"]:
            rows.append(
                {
                    **base_row,
                    "kind": "sample",
                    "seed": seed_row["seed"],
                    "ap_all": seed_row["ap_all"],
                    "ap_global": seed_row["ap_global"],
                    "ap_local": seed_row["ap_local"],
                    "rounds_run": seed_row["rounds_run"],
                    "config_digest": result["config_digest"],
                    "error": "",
                }
            )
        for kind in ("mean", "std"):
            stats = result[kind]
            rows.append(
                {
                    **base_row,
                    "kind": kind,
                    "seed": "",
                    "ap_all": stats["ap_all"],
                    "ap_global": stats["ap_global"],
                    "ap_local": stats["ap_local"],
                    "rounds_run": "",
                    "config_digest": result["config_digest"],
                    "error": "",
                }
            )

    with open(out_dir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k, "")) for k in SWEEP_COLUMNS})
    return rows, n_failed


# --------------------------------------------------------------------------
# standalone evaluation


def evaluate_checkpoint(
    cfg: ExperimentConfig,
    dataset_dir: str | Path,
    checkpoint_base: str | Path,
    out_path: str | Path | None = None,
) -> EvalReport:
    """Re-score a prepared dataset with a saved model and (optionally) write
    the report JSON."""
    from .model import load_checkpoint

    encoded, plan, _manifest = load_dataset(dataset_dir)
    vector, input_dim, _mask, ckpt_manifest = load_checkpoint(checkpoint_base)
    if input_dim != encoded.n_features:
        raise ConfigError(
            f"checkpoint expects {input_dim} features but the dataset has "
            f"{encoded.n_features}"
        )
    if cfg.run.eval_scope == "client0":
        if plan is None:
            raise ConfigError(
                "eval_scope=client0 needs a dataset with partition assignments"
            )
        eval_data = encoded.rows(plan.indices(0))
    else:
        eval_data = encoded
    loss = _loss_for(cfg, encoded.column_map)
    losses = score_dataset(eval_data, vector, loss)
    report = evaluate(losses, eval_data.labels, other_class=cfg.run.other_class)
    if out_path is not None:
        write_report_json(
            report,
            out_path,
            extra={
                "eval_scope": cfg.run.eval_scope,
                "checkpoint": str(checkpoint_base),
                "checkpoint_digest": ckpt_manifest.get("config_digest"),
            },
        )
    return report
