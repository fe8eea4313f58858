"""Input validation helpers shared across the package.

Small, explicit checks that normalize user input to float64 numpy arrays and
raise the package's typed errors instead of bare numpy exceptions.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import NumericError, ShapeError


def as_matrix(x, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D C-contiguous float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={arr.ndim}")
    return np.ascontiguousarray(arr)


def as_vector(x, name: str = "x") -> np.ndarray:
    """Coerce to a 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got ndim={arr.ndim}")
    return arr


def check_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr).reshape(-1))[0])
        raise NumericError(f"{name} contains a non-finite value (flat index {bad})")
    return arr


def check_same_rows(a: np.ndarray, b: np.ndarray, name_a: str, name_b: str) -> None:
    if a.shape[0] != b.shape[0]:
        raise ShapeError(
            f"{name_a} and {name_b} must have the same number of rows "
            f"({a.shape[0]} != {b.shape[0]})"
        )


def check_positive_int(value: int, name: str, minimum: int = 1) -> int:
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise ShapeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ShapeError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_probability_open(value: float, name: str) -> float:
    if not (0.0 < value < 1.0):
        raise ShapeError(f"{name} must lie in (0, 1), got {value}")
    return float(value)


def lengths_consistent(seqs: Sequence[Sequence], names: Sequence[str]) -> int:
    """Assert all sequences share one length; return it."""
    n = len(seqs[0])
    for s, name in zip(seqs, names):
        if len(s) != n:
            raise ShapeError(f"{name} has length {len(s)}, expected {n}")
    return n
