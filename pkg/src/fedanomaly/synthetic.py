"""Synthetic accounting-record generator for demos and self-contained tests.

Records mimic journal-entry structure: two independent bookkeeping factors
(department and account) drawn uniformly, with every other attribute and the
amount a fixed function of that pair. The 12x12 factor grid gives a
reconstruction model a two-dimensional family of record types it has to
spread across its whole bottleneck, and the deterministic side columns mean
a record combining values from two different (department, account) cells
cannot be reconstructed well by any model that fits the normal data — which
is exactly what injected local anomalies look like.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import DatasetSchema, RawDataset

SYNTHETIC_SCHEMA = DatasetSchema(
    categorical=(
        "department",
        "account",
        "posting_key",
        "cost_center",
        "doc_type",
        "vendor",
    ),
    numeric=("amount",),
    department="department",
)

_N_DEPARTMENTS = 12
_N_ACCOUNTS = 12
_AMOUNT_NOISE_SD = 2.5


def make_synthetic(n_records: int = 8000, seed: int = 0) -> RawDataset:
    """All-normal synthetic dataset; anomalies come from inject_anomalies.

    Attribute cardinalities: department 12, account 12, posting_key 12,
    cost_center 20, doc_type 12, vendor 28. The amount lies on a distinct
    level per (department, account) cell, four noise standard deviations
    apart, so an amount copied across cells is visibly off its level.
    """
    if n_records < 1:
        raise ValueError(f"n_records must be >= 1, got {n_records}")
    # own stream tag: keeps these draws disjoint from injection/partition
    # streams even when call sites reuse the same base seed
    rng = np.random.default_rng([seed, 7])
    dept = rng.integers(0, _N_DEPARTMENTS, size=n_records)
    acct = rng.integers(0, _N_ACCOUNTS, size=n_records)

    columns = {
        "department": dept,
        "account": acct,
        "posting_key": (3 * dept + 5 * acct) % 12,
        "cost_center": (7 * dept + 3 * acct) % 20,
        "doc_type": (11 * dept) % 15,
        "vendor": (5 * dept + 9 * acct) % 28,
    }
    amount = 10.0 * (1 + dept * _N_ACCOUNTS + acct) + rng.normal(
        0.0, _AMOUNT_NOISE_SD, size=n_records
    )

    cat_columns = [
        [f"{attr}_{v:02d}" for v in columns[attr]]
        for attr in SYNTHETIC_SCHEMA.categorical
    ]
    return RawDataset(
        schema=SYNTHETIC_SCHEMA,
        cat_columns=cat_columns,
        numeric=amount.reshape(-1, 1),
        labels=np.zeros(n_records, dtype=np.int64),
        departments=list(cat_columns[0]),
    )


def write_csv(data: RawDataset, path: str | Path) -> Path:
    """Write a RawDataset back out as a loadable CSV file."""
    import csv

    schema = data.schema
    columns = list(schema.categorical) + list(schema.numeric)
    if schema.department not in columns:
        columns.append(schema.department)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for i in range(data.n_records):
            row = [col[i] for col in data.cat_columns]
            row += [repr(float(v)) for v in data.numeric[i]]
            if schema.department not in schema.categorical:
                row.append(data.departments[i])
            writer.writerow(row)
    return path


def main(argv=None) -> int:
    """python -m fedanomaly.synthetic <out.csv> [--records N] [--seed S]"""
    import argparse

    parser = argparse.ArgumentParser(
        description="Generate a synthetic accounting-record CSV."
    )
    parser.add_argument("out", help="destination CSV path")
    parser.add_argument("--records", type=int, default=8000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    path = write_csv(make_synthetic(args.records, args.seed), args.out)
    print(f"wrote {args.records} records to {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
