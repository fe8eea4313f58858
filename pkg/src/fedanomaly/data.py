"""Raw tabular ingestion, anomaly injection, and federated partitioning.

Records are mixed categorical strings + numeric floats. Two synthetic anomaly
classes can be appended to a loaded dataset:

  * global anomalies — every categorical attribute gets a synthetic token that
    never occurs in the original data, numerics fall in (max, 2*max];
  * local anomalies — each attribute takes one of its frequent (top-quartile)
    values, resampled until the full combination never occurred, numerics
    copied from a random real record.

So individual global values are rare, while local records are made of common
values in a co-occurrence that never happened — matching the two failure
modes the detector is meant to rank.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    InjectionError,
    PartitionError,
    SchemaError,
    ShapeError,
)

ANOMALY_TOKEN_PREFIX = "ANOM"
LOCAL_RESAMPLE_TRIES = 1000


class Label(IntEnum):
    NORMAL = 0
    GLOBAL = 1
    LOCAL = 2


@dataclass(frozen=True)
class DatasetSchema:
    """Declares which CSV columns are what. Nothing is inferred from files."""

    categorical: tuple[str, ...]
    numeric: tuple[str, ...]
    department: str

    def __post_init__(self):
        object.__setattr__(self, "categorical", tuple(self.categorical))
        object.__setattr__(self, "numeric", tuple(self.numeric))
        if len(self.categorical) < 1:
            raise SchemaError("schema needs at least one categorical attribute")
        if len(self.numeric) < 1:
            raise SchemaError("schema needs at least one numeric attribute")
        names = list(self.categorical) + list(self.numeric)
        if len(set(names)) != len(names):
            raise SchemaError(f"attribute names must be unique, got {names}")
        if not self.department:
            raise SchemaError("schema needs a department column name")

    @property
    def n_categorical(self) -> int:
        return len(self.categorical)

    @property
    def n_numeric(self) -> int:
        return len(self.numeric)


@dataclass
class RawDataset:
    """Column-major record store.

    cat_columns[j][i] is categorical attribute j of record i; numeric is the
    (N, K) float matrix; labels and departments run parallel to records.
    """

    schema: DatasetSchema
    cat_columns: list[list[str]]
    numeric: np.ndarray
    labels: np.ndarray
    departments: list[str]

    def __post_init__(self):
        self.numeric = np.asarray(self.numeric, dtype=np.float64)
        if self.numeric.ndim != 2 or self.numeric.shape[1] != self.schema.n_numeric:
            raise ShapeError(
                f"numeric matrix shape {self.numeric.shape} does not match "
                f"schema K={self.schema.n_numeric}"
            )
        n = self.numeric.shape[0]
        if len(self.cat_columns) != self.schema.n_categorical:
            raise ShapeError(
                f"{len(self.cat_columns)} categorical columns vs schema "
                f"M={self.schema.n_categorical}"
            )
        for name, col in zip(self.schema.categorical, self.cat_columns):
            if len(col) != n:
                raise ShapeError(f"column {name} has {len(col)} values, expected {n}")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (n,) or len(self.departments) != n:
            raise ShapeError("labels/departments must have one entry per record")

    @property
    def n_records(self) -> int:
        return self.numeric.shape[0]

    def record(self, i: int) -> tuple[list[str], np.ndarray]:
        """(categorical values, numeric values) of record i."""
        return [col[i] for col in self.cat_columns], self.numeric[i]

    def label_counts(self) -> dict[Label, int]:
        return {lab: int(np.sum(self.labels == lab)) for lab in Label}


def load_csv(path: str | Path, schema: DatasetSchema) -> RawDataset:
    """Read a comma-separated UTF-8 file with a header row.

    Raises SchemaError when a declared column is missing, DataError with the
    1-based data row number (and column name for bad numerics) otherwise.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path} is empty (no header row)") from None
        col_index: dict[str, int] = {}
        for name in list(schema.categorical) + list(schema.numeric) + [schema.department]:
            if name in col_index:
                continue
            try:
                col_index[name] = header.index(name)
            except ValueError:
                raise SchemaError(f"{path} has no column {name!r}") from None

        cat_columns: list[list[str]] = [[] for _ in schema.categorical]
        numeric_rows: list[list[float]] = []
        departments: list[str] = []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise DataError(
                    f"row {row_no} has {len(row)} fields, header has {len(header)}",
                    row=row_no,
                )
            for j, name in enumerate(schema.categorical):
                cat_columns[j].append(row[col_index[name]])
            nums = []
            for name in schema.numeric:
                text = row[col_index[name]]
                try:
                    value = float(text)
                except ValueError:
                    raise DataError(
                        f"row {row_no}, column {name!r}: cannot parse {text!r} as a number",
                        row=row_no,
                        column=name,
                    ) from None
                # nan/inf would otherwise vanish into the min-max scaler
                if not math.isfinite(value):
                    raise DataError(
                        f"row {row_no}, column {name!r}: non-finite value {text!r}",
                        row=row_no,
                        column=name,
                    )
                nums.append(value)
            numeric_rows.append(nums)
            departments.append(row[col_index[schema.department]])

    n = len(departments)
    numeric = (
        np.asarray(numeric_rows, dtype=np.float64)
        if n
        else np.empty((0, schema.n_numeric))
    )
    return RawDataset(
        schema=schema,
        cat_columns=cat_columns,
        numeric=numeric,
        labels=np.zeros(n, dtype=np.int64),
        departments=departments,
    )


# --------------------------------------------------------------------------
# anomaly injection


def _top_quartile_values(column: list[str]) -> list[str]:
    """Distinct values ordered by frequency desc (first-occurrence tie-break),
    cut to the top quarter (at least one)."""
    counts: dict[str, list[int]] = {}
    for idx, value in enumerate(column):
        entry = counts.get(value)
        if entry is None:
            counts[value] = [1, idx]
        else:
            entry[0] += 1
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1][0], kv[1][1]))
    n_top = max(1, math.ceil(len(ordered) / 4))
    return [value for value, _ in ordered[:n_top]]


def inject_anomalies(
    data: RawDataset, n_global: int, n_local: int, seed: int
) -> RawDataset:
    """Append labeled synthetic anomalies; the input dataset is not mutated.

    Synthesis statistics (vocabularies, numeric maxima, frequent values, value
    combinations) all come from the ORIGINAL records, so re-injecting into an
    already augmented dataset is not meaningful. Global records come first in
    the appended block, then local ones.
    """
    if n_global < 0 or n_local < 0:
        raise InjectionError("anomaly counts must be >= 0")
    if data.n_records == 0:
        raise InjectionError("cannot inject into an empty dataset")
    schema = data.schema
    n_orig = data.n_records
    rng = np.random.default_rng(seed)

    cat_columns = [list(col) for col in data.cat_columns]
    departments = list(data.departments)
    labels = list(data.labels)
    new_numeric: list[np.ndarray] = []

    vocabularies = [set(col) for col in data.cat_columns]
    col_max = data.numeric.max(axis=0)
    dept_pos = (
        schema.categorical.index(schema.department)
        if schema.department in schema.categorical
        else None
    )

    # globals: unique synthetic tokens, numerics beyond the observed range
    token_serial = 0
    for _ in range(n_global):
        values = []
        for j, attr in enumerate(schema.categorical):
            while True:
                token = f"{ANOMALY_TOKEN_PREFIX}_{attr}_{token_serial}"
                if token not in vocabularies[j]:
                    break
                token_serial += 1  # original data already used this name
            values.append(token)
        token_serial += 1
        for j, value in enumerate(values):
            cat_columns[j].append(value)
        # uniform over (max, 2*max]: rng.random() is [0,1) so 2-u is (1,2]
        new_numeric.append(col_max * (2.0 - rng.random(schema.n_numeric)))
        departments.append(
            values[dept_pos] if dept_pos is not None
            else f"{ANOMALY_TOKEN_PREFIX}_{schema.department}_{token_serial - 1}"
        )
        labels.append(int(Label.GLOBAL))

    # locals: frequent individual values in an unseen combination
    if n_local > 0:
        frequent = [_top_quartile_values(col) for col in data.cat_columns]
        seen = set(zip(*data.cat_columns))
        for _ in range(n_local):
            for _attempt in range(LOCAL_RESAMPLE_TRIES):
                combo = tuple(
                    values[rng.integers(0, len(values))] for values in frequent
                )
                if combo not in seen:
                    break
            else:
                raise InjectionError(
                    f"no unseen value combination found in {LOCAL_RESAMPLE_TRIES} "
                    "tries; the dataset is too dense for local-anomaly synthesis"
                )
            for j, value in enumerate(combo):
                cat_columns[j].append(value)
            source = int(rng.integers(0, n_orig))
            new_numeric.append(data.numeric[source].copy())
            departments.append(
                combo[dept_pos] if dept_pos is not None else data.departments[source]
            )
            labels.append(int(Label.LOCAL))

    numeric = (
        np.vstack([data.numeric, np.asarray(new_numeric)])
        if new_numeric
        else data.numeric.copy()
    )
    return RawDataset(
        schema=schema,
        cat_columns=cat_columns,
        numeric=numeric,
        labels=np.asarray(labels, dtype=np.int64),
        departments=departments,
    )


# --------------------------------------------------------------------------
# partitioning


@dataclass
class PartitionPlan:
    """Per-record partition assignment for gamma federated clients."""

    gamma: int
    mode: str  # "iid" | "noniid"
    assignments: np.ndarray

    def __post_init__(self):
        self.assignments = np.asarray(self.assignments, dtype=np.int64)
        if self.gamma < 1:
            raise PartitionError(f"gamma must be >= 1, got {self.gamma}")
        if self.mode not in ("iid", "noniid"):
            raise PartitionError(f"mode must be 'iid' or 'noniid', got {self.mode!r}")
        if self.assignments.ndim != 1:
            raise PartitionError("assignments must be a flat per-record vector")
        if self.assignments.size and (
            self.assignments.min() < 0 or self.assignments.max() >= self.gamma
        ):
            raise PartitionError("assignments must lie in [0, gamma)")

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.gamma)

    def indices(self, part: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == part)

    def all_indices(self) -> list[np.ndarray]:
        return [self.indices(p) for p in range(self.gamma)]


def partition(data: RawDataset, mode: str, gamma: int, seed: int) -> PartitionPlan:
    """Assign every record to one of `gamma` partitions.

    iid draws a uniform partition per record; noniid groups records by
    department (largest department first, greedily into the currently
    smallest partition, lowest index on ties). Anomalous records always land
    in partition 0, whatever the mode.
    """
    if gamma < 1:
        raise PartitionError(f"gamma must be >= 1, got {gamma}")
    n = data.n_records
    rng = np.random.default_rng(seed)
    anomalous = data.labels != Label.NORMAL

    if mode == "iid":
        assignments = rng.integers(0, gamma, size=n)
    elif mode == "noniid":
        assignments = np.zeros(n, dtype=np.int64)
        normal_idx = np.flatnonzero(~anomalous)
        by_dept: dict[str, list[int]] = {}
        for i in normal_idx:
            by_dept.setdefault(data.departments[i], []).append(int(i))
        if len(by_dept) < gamma:
            raise PartitionError(
                f"non-iid partitioning needs at least {gamma} departments, "
                f"found {len(by_dept)}"
            )
        ordered = sorted(by_dept.items(), key=lambda kv: (-len(kv[1]), kv[0]))
        fill = np.zeros(gamma, dtype=np.int64)
        for _dept, rows in ordered:
            target = int(np.argmin(fill))  # argmin takes the lowest index on ties
            assignments[rows] = target
            fill[target] += len(rows)
    else:
        raise PartitionError(f"mode must be 'iid' or 'noniid', got {mode!r}")

    assignments[anomalous] = 0
    plan = PartitionPlan(gamma=gamma, mode=mode, assignments=assignments)
    sizes = plan.sizes()
    if (sizes == 0).any():
        empty = int(np.flatnonzero(sizes == 0)[0])
        raise PartitionError(
            f"partition {empty} received no records (N={n}, gamma={gamma}); "
            "use fewer partitions"
        )
    return plan
