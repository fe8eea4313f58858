"""Combined reconstruction loss for mixed categorical/numeric records.

The decoder ends in Tanh, so outputs t in (-1, 1) are mapped to p = (t+1)/2.
Categorical slices take a normalized binary cross-entropy per attribute
(divided by the attribute's one-hot width, p clamped away from {0,1});
numeric columns take plain squared error against their min-max-scaled
targets. Per sample:

    loss = w * sum_j BCE_j + (1 - w) * sum_l (p_l - x_l)^2

with w = categorical_weight (default 2/3). The whole thing collapses to a
single weighted dot product over precomputed per-column weights, which keeps
scoring row-stable (see nn.matmul_rows for why that matters).
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError
from .validation import as_matrix, check_same_rows


class ReconstructionLoss:
    """Loss object usable everywhere nn.py expects one.

    Args:
      column_map: layout of the encoded matrix (encoding.ColumnMap) — anything
        with .categorical (name, start, stop) triples, .numeric (name, col)
        pairs and .width works. None treats every column as numeric.
      categorical_weight: weight on the BCE sum; the squared-error sum gets
        (1 - categorical_weight).
      clamp_epsilon: categorical probabilities are clamped to
        [clamp_epsilon, 1 - clamp_epsilon] before the logs.
    """

    def __init__(self, column_map=None, categorical_weight: float = 2.0 / 3.0,
                 clamp_epsilon: float = 1e-6):
        if not 0.0 <= categorical_weight <= 1.0:
            raise ShapeError(
                f"categorical_weight must lie in [0, 1], got {categorical_weight}"
            )
        if not 0.0 < clamp_epsilon < 0.5:
            raise ShapeError(
                f"clamp_epsilon must lie in (0, 0.5), got {clamp_epsilon}"
            )
        self.column_map = column_map
        self.categorical_weight = float(categorical_weight)
        self.clamp_epsilon = float(clamp_epsilon)
        self._width = None if column_map is None else int(column_map.width)
        self._weights_cache: np.ndarray | None = None
        self._cat_mask_cache: np.ndarray | None = None

    # -- layout ------------------------------------------------------------

    def _layout(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        """(per-column weights, categorical mask) for a `dim`-wide matrix."""
        if self._weights_cache is not None and self._weights_cache.shape[0] == dim:
            return self._weights_cache, self._cat_mask_cache
        if self.column_map is None:
            weights = np.full(dim, 1.0 - self.categorical_weight)
            cat_mask = np.zeros(dim, dtype=bool)
        else:
            if dim != self._width:
                raise ShapeError(
                    f"matrix has {dim} columns but column map describes {self._width}"
                )
            weights = np.zeros(dim)
            cat_mask = np.zeros(dim, dtype=bool)
            for _, start, stop in self.column_map.categorical:
                width = stop - start
                weights[start:stop] = self.categorical_weight / width
                cat_mask[start:stop] = True
            for _, col in self.column_map.numeric:
                weights[col] = 1.0 - self.categorical_weight
        self._weights_cache = weights
        self._cat_mask_cache = cat_mask
        return weights, cat_mask

    def _check(self, outputs: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        outputs = as_matrix(outputs, "recon")
        targets = as_matrix(targets, "target")
        check_same_rows(outputs, targets, "recon", "target")
        if outputs.shape[1] != targets.shape[1]:
            raise ShapeError(
                f"recon has {outputs.shape[1]} columns, target has {targets.shape[1]}"
            )
        return outputs, targets

    # -- loss protocol (see nn.py) ----------------------------------------

    def per_sample(self, outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
        outputs, targets = self._check(outputs, targets)
        weights, cat_mask = self._layout(outputs.shape[1])
        p = (outputs + 1.0) * 0.5
        elems = np.empty_like(p)
        if cat_mask.any():
            eps = self.clamp_epsilon
            pc = np.clip(p[:, cat_mask], eps, 1.0 - eps)
            xc = targets[:, cat_mask]
            elems[:, cat_mask] = -(xc * np.log(pc) + (1.0 - xc) * np.log(1.0 - pc))
        num_mask = ~cat_mask
        if num_mask.any():
            d = p[:, num_mask] - targets[:, num_mask]
            elems[:, num_mask] = d * d
        losses = np.einsum("bd,d->b", elems, weights)
        if not np.all(np.isfinite(losses)):
            idx = int(np.flatnonzero(~np.isfinite(losses))[0])
            raise NumericError(f"non-finite loss for sample {idx}", sample_index=idx)
        return losses

    def output_grad(self, outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """d(per-sample loss)/d(raw network output t); clamped regions get 0."""
        outputs, targets = self._check(outputs, targets)
        weights, cat_mask = self._layout(outputs.shape[1])
        p = (outputs + 1.0) * 0.5
        grad_p = np.empty_like(p)
        if cat_mask.any():
            eps = self.clamp_epsilon
            praw = p[:, cat_mask]
            pc = np.clip(praw, eps, 1.0 - eps)
            xc = targets[:, cat_mask]
            g = -xc / pc + (1.0 - xc) / (1.0 - pc)
            g[(praw < eps) | (praw > 1.0 - eps)] = 0.0  # clamp is flat there
            grad_p[:, cat_mask] = g
        num_mask = ~cat_mask
        if num_mask.any():
            grad_p[:, num_mask] = 2.0 * (p[:, num_mask] - targets[:, num_mask])
        # dp/dt = 1/2, column weights fold in here
        return grad_p * (weights * 0.5)


def reconstruction_loss(recon, target, spec: ReconstructionLoss) -> np.ndarray:
    """Per-sample combined loss of a reconstruction against its target."""
    return spec.per_sample(recon, target)
