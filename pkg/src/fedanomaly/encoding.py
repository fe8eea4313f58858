"""One-hot + min-max encoding of raw records, and the dataset artifact format.

Categorical attributes expand to one indicator column per distinct value
(first-occurrence order); numeric attributes are min-max scaled to [0, 1]
over the fitted records, a constant column mapping to all zeros. The fitted
layout is captured in a ColumnMap so losses can weight categorical and
numeric slices differently.

The on-disk artifact is a directory holding `manifest.json` (schema, vocab,
ranges, labels, partition assignments) and `matrix.bin` (little-endian: two
uint64 dims, then the row-major float64 matrix).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .data import DatasetSchema, Label, PartitionPlan, RawDataset
from .errors import ConfigError, DataError, ShapeError

DATASET_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
MATRIX_NAME = "matrix.bin"


@dataclass(frozen=True)
class ColumnMap:
    """Where each attribute landed in the encoded matrix.

    categorical: (attribute, start, stop) half-open column spans;
    numeric: (attribute, column) single positions.
    """

    categorical: tuple[tuple[str, int, int], ...]
    numeric: tuple[tuple[str, int], ...]
    width: int

    def __post_init__(self):
        object.__setattr__(
            self,
            "categorical",
            tuple((str(n), int(a), int(b)) for n, a, b in self.categorical),
        )
        object.__setattr__(
            self, "numeric", tuple((str(n), int(c)) for n, c in self.numeric)
        )
        for name, start, stop in self.categorical:
            if not 0 <= start < stop <= self.width:
                raise ShapeError(f"bad span for {name}: [{start}, {stop})")
        for name, col in self.numeric:
            if not 0 <= col < self.width:
                raise ShapeError(f"bad column for {name}: {col}")

    def categorical_widths(self) -> dict[str, int]:
        return {name: stop - start for name, start, stop in self.categorical}

    def to_dict(self) -> dict:
        return {
            "categorical": [list(span) for span in self.categorical],
            "numeric": [list(pos) for pos in self.numeric],
            "width": self.width,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMap":
        return cls(
            categorical=tuple((n, a, b) for n, a, b in d["categorical"]),
            numeric=tuple((n, c) for n, c in d["numeric"]),
            width=int(d["width"]),
        )


class TabularEncoder(BaseEstimator, TransformerMixin):
    """Fit vocabularies/ranges on one RawDataset, transform it (or another
    with the same schema) to a dense float64 matrix."""

    def fit(self, X: RawDataset, y=None):
        schema = X.schema
        vocabularies: dict[str, tuple[str, ...]] = {}
        for name, column in zip(schema.categorical, X.cat_columns):
            vocabularies[name] = tuple(dict.fromkeys(column))
        ranges: dict[str, tuple[float, float]] = {}
        for k, name in enumerate(schema.numeric):
            col = X.numeric[:, k]
            ranges[name] = (float(col.min()), float(col.max()))

        spans = []
        offset = 0
        for name in schema.categorical:
            width = len(vocabularies[name])
            spans.append((name, offset, offset + width))
            offset += width
        positions = []
        for name in schema.numeric:
            positions.append((name, offset))
            offset += 1

        self.schema_ = schema
        self.vocabularies_ = vocabularies
        self.numeric_ranges_ = ranges
        self.column_map_ = ColumnMap(
            categorical=tuple(spans), numeric=tuple(positions), width=offset
        )
        return self

    def transform(self, X: RawDataset) -> np.ndarray:
        if not hasattr(self, "column_map_"):
            raise ConfigError("TabularEncoder.transform called before fit")
        if X.schema != self.schema_:
            raise ConfigError("dataset schema differs from the fitted schema")
        n = X.n_records
        out = np.zeros((n, self.column_map_.width), dtype=np.float64)
        for (name, start, _stop), column in zip(
            self.column_map_.categorical, X.cat_columns
        ):
            index = {value: j for j, value in enumerate(self.vocabularies_[name])}
            for i, value in enumerate(column):
                j = index.get(value)
                if j is None:
                    raise DataError(
                        f"record {i}: value {value!r} of {name!r} was not seen "
                        "during fitting",
                        row=i,
                        column=name,
                    )
                out[i, start + j] = 1.0
        for k, (name, col) in enumerate(self.column_map_.numeric):
            lo, hi = self.numeric_ranges_[name]
            if hi > lo:
                out[:, col] = (X.numeric[:, k] - lo) / (hi - lo)
            # constant columns stay 0
        return out


@dataclass
class EncodedDataset:
    """Encoded matrix plus everything needed to interpret and score it."""

    matrix: np.ndarray
    column_map: ColumnMap
    vocabularies: dict[str, tuple[str, ...]]
    numeric_ranges: dict[str, tuple[float, float]]
    labels: np.ndarray
    schema: DatasetSchema

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.column_map.width:
            raise ShapeError(
                f"matrix shape {self.matrix.shape} vs column map width "
                f"{self.column_map.width}"
            )
        if self.labels.shape != (self.matrix.shape[0],):
            raise ShapeError("labels must have one entry per matrix row")

    @property
    def n_records(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    def rows(self, idx: np.ndarray) -> "EncodedDataset":
        return EncodedDataset(
            matrix=self.matrix[idx],
            column_map=self.column_map,
            vocabularies=self.vocabularies,
            numeric_ranges=self.numeric_ranges,
            labels=self.labels[idx],
            schema=self.schema,
        )


def encode_dataset(raw: RawDataset) -> EncodedDataset:
    encoder = TabularEncoder().fit(raw)
    return EncodedDataset(
        matrix=encoder.transform(raw),
        column_map=encoder.column_map_,
        vocabularies=encoder.vocabularies_,
        numeric_ranges=encoder.numeric_ranges_,
        labels=raw.labels.copy(),
        schema=raw.schema,
    )


# --------------------------------------------------------------------------
# persistence


def _write_matrix(path: Path, matrix: np.ndarray) -> str:
    rows, cols = matrix.shape
    header = np.array([rows, cols], dtype="<u8").tobytes()
    body = np.ascontiguousarray(matrix, dtype="<f8").tobytes()
    blob = header + body
    path.write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def _read_matrix(path: Path) -> tuple[np.ndarray, str]:
    blob = path.read_bytes()
    if len(blob) < 16:
        raise ConfigError(f"{path} is too short to hold a matrix header")
    rows, cols = (int(v) for v in np.frombuffer(blob[:16], dtype="<u8"))
    expected = 16 + rows * cols * 8
    if len(blob) != expected:
        raise ConfigError(
            f"{path}: expected {expected} bytes for a {rows}x{cols} matrix, "
            f"found {len(blob)}"
        )
    matrix = (
        np.frombuffer(blob[16:], dtype="<f8").reshape(rows, cols).astype(np.float64)
    )
    return matrix, hashlib.sha256(blob).hexdigest()


def save_dataset(
    directory: str | Path,
    encoded: EncodedDataset,
    plan: PartitionPlan | None = None,
    extra: dict | None = None,
) -> Path:
    """Write manifest.json + matrix.bin under `directory`; returns it."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    digest = _write_matrix(directory / MATRIX_NAME, encoded.matrix)
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "kind": "encoded-dataset",
        "n_records": encoded.n_records,
        "n_features": encoded.n_features,
        "schema": {
            "categorical": list(encoded.schema.categorical),
            "numeric": list(encoded.schema.numeric),
            "department": encoded.schema.department,
        },
        "column_map": encoded.column_map.to_dict(),
        "vocabularies": {k: list(v) for k, v in encoded.vocabularies.items()},
        "numeric_ranges": {k: list(v) for k, v in encoded.numeric_ranges.items()},
        "labels": [int(v) for v in encoded.labels],
        "label_counts": {
            lab.name.lower(): int(np.sum(encoded.labels == lab)) for lab in Label
        },
        "matrix_file": MATRIX_NAME,
        "matrix_sha256": digest,
        "partition": None
        if plan is None
        else {
            "gamma": plan.gamma,
            "mode": plan.mode,
            "assignments": [int(v) for v in plan.assignments],
        },
    }
    if extra:
        manifest.update(extra)
    with open(directory / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return directory


def load_dataset(
    directory: str | Path,
) -> tuple[EncodedDataset, PartitionPlan | None, dict]:
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise ConfigError(f"{directory} has no {MANIFEST_NAME}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("kind") != "encoded-dataset":
        raise ConfigError(f"{manifest_path} is not a dataset manifest")
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise ConfigError(
            f"unsupported dataset format_version {manifest.get('format_version')}"
        )
    matrix, digest = _read_matrix(directory / manifest["matrix_file"])
    if digest != manifest["matrix_sha256"]:
        raise ConfigError(f"{directory}: matrix checksum mismatch")
    if matrix.shape != (manifest["n_records"], manifest["n_features"]):
        raise ConfigError(f"{directory}: matrix shape differs from manifest")
    schema = DatasetSchema(
        categorical=tuple(manifest["schema"]["categorical"]),
        numeric=tuple(manifest["schema"]["numeric"]),
        department=manifest["schema"]["department"],
    )
    encoded = EncodedDataset(
        matrix=matrix,
        column_map=ColumnMap.from_dict(manifest["column_map"]),
        vocabularies={k: tuple(v) for k, v in manifest["vocabularies"].items()},
        numeric_ranges={
            k: (float(a), float(b))
            for k, (a, b) in manifest["numeric_ranges"].items()
        },
        labels=np.asarray(manifest["labels"], dtype=np.int64),
        schema=schema,
    )
    plan = None
    if manifest.get("partition") is not None:
        p = manifest["partition"]
        plan = PartitionPlan(
            gamma=int(p["gamma"]),
            mode=p["mode"],
            assignments=np.asarray(p["assignments"], dtype=np.int64),
        )
    return encoded, plan, manifest
