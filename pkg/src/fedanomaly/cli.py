"""Command-line front-end: prepare / train / sweep / eval.

Exit codes: 0 success; 1 usage or config error; 2 data-stage error (schema,
parsing, injection, partitioning, undefined evaluation); 3 numeric or
training error; 4 sweep finished with failed cells. Diagnostics go to
stderr, prefixed with the stage that failed.

Output directory resolution: --out flag, else $FEDANOMALY_OUTPUT_DIR, else
run.output_dir from the config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import ExperimentConfig, config_digest, load_config
from .errors import (
    AggregationError,
    ConfigError,
    DataError,
    EvalError,
    FederationError,
    InjectionError,
    NumericError,
    PartitionError,
    SchemaError,
    ShapeError,
)
from .experiment import (
    evaluate_checkpoint,
    prepare_dataset,
    run_sweep,
    run_training,
)

OUTPUT_DIR_ENV = "FEDANOMALY_OUTPUT_DIR"

_DATA_ERRORS = (SchemaError, DataError, InjectionError, PartitionError, EvalError)
_TRAINING_ERRORS = (NumericError, FederationError, AggregationError, ShapeError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error[usage]: {message}\n")
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="fedanomaly",
        description="Federated reconstruction-based anomaly detection on "
        "tabular accounting data.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", help="output directory (overrides config and env)")
        p.add_argument(
            "--seed-override",
            type=int,
            default=None,
            help="run a single seed instead of the configured list",
        )
        p.add_argument(
            "--jobs",
            type=int,
            default=None,
            help="worker bound (accepted for compatibility; execution is "
            "sequential and results never depend on it)",
        )
        p.add_argument(
            "--format",
            choices=("json", "csv"),
            default="json",
            help="stdout summary format",
        )

    common(sub.add_parser("prepare", help="encode + partition the dataset"))
    common(sub.add_parser("train", help="federated training over all seeds"))
    common(sub.add_parser("sweep", help="grid sweep over the [sweep] section"))
    p_eval = sub.add_parser("eval", help="re-score a prepared dataset with a checkpoint")
    common(p_eval)
    p_eval.add_argument(
        "--data",
        help="prepared dataset directory (default: <out>/dataset)",
    )
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint base path")
    return parser


def _resolve_out(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        return Path(env)
    return Path(cfg.run.output_dir)


def _diag(stage: str, exc: Exception) -> None:
    print(f"error[{stage}]: {exc}", file=sys.stderr)


def _emit(payload: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for key, value in sorted(payload.items()):
            print(f"{key},{value}")


def _train_csv(result: dict) -> str:
    lines = ["kind,seed,ap_all,ap_global,ap_local,rounds_run"]
    for row in result["per_seed"]:
        lines.append(
            f"sample,{row['seed']},{row['ap_all']},{row['ap_global']},"
            f"{row['ap_local']},{row['rounds_run']}"
        )
    for kind in ("mean", "std"):
        stats = result[kind]
        lines.append(
            f"{kind},,{stats['ap_all']},{stats['ap_global']},{stats['ap_local']},"
        )
    return "\n".join(lines)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError:
        return 1

    stage = "config"
    try:
        cfg = load_config(args.config)
        out_dir = _resolve_out(args, cfg)
        seeds = None if args.seed_override is None else (args.seed_override,)

        if args.command == "prepare":
            stage = "prepare"
            encoded, plan, dataset_dir = prepare_dataset(cfg, out_dir)
            _emit(
                {
                    "n_records": encoded.n_records,
                    "n_categorical": len(cfg.dataset.categorical),
                    "n_numeric": len(cfg.dataset.numeric),
                    "encoded_width": encoded.n_features,
                    "partition_sizes": list(map(int, plan.sizes())),
                    "dataset_dir": str(dataset_dir),
                    "config_digest": config_digest(cfg),
                },
                args.format,
            )
            return 0

        if args.command == "train":
            stage = "train"
            result = run_training(cfg, out_dir, seeds=seeds)
            if args.format == "json":
                print(json.dumps(result, indent=2, sort_keys=True))
            else:
                print(_train_csv(result))
            return 0

        if args.command == "sweep":
            stage = "sweep"
            rows, n_failed = run_sweep(cfg, out_dir, seeds=seeds)
            summary = {
                "cells": len({r["cell"] for r in rows}),
                "failed": n_failed,
                "sweep_csv": str(Path(out_dir) / "sweep.csv"),
            }
            if args.format == "json":
                print(json.dumps(summary, indent=2, sort_keys=True))
            else:
                print((Path(out_dir) / "sweep.csv").read_text(), end="")
            return 4 if n_failed else 0

        if args.command == "eval":
            stage = "eval"
            data_dir = Path(args.data) if args.data else out_dir / "dataset"
            report = evaluate_checkpoint(
                cfg,
                data_dir,
                args.checkpoint,
                out_path=out_dir / "eval_report.json",
            )
            _emit(report.to_dict(include_curves=False), args.format)
            return 0

        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        _diag(stage, exc)
        return 1
    except _DATA_ERRORS as exc:
        _diag(stage, exc)
        return 2
    except _TRAINING_ERRORS as exc:
        _diag(stage, exc)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
