"""Differentially private gradient processing.

Flat per-sample l2 clipping (one norm over the whole parameter vector),
Gaussian-mechanism noise with scale sigma = clip_norm * noise_multiplier, and
the DP-SGD gradient estimator: (sum of clipped per-sample gradients + noise)
divided by the batch size. Noise is added once to the per-batch SUM, inside
each client update, never to aggregated model deltas.

No privacy budget accounting happens here — the mechanism parameters are
exposed and applied, full stop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError, ShapeError


@dataclass(frozen=True)
class DpConfig:
    """Gradient privacy knobs.

    clip_norm is the per-sample l2 bound over all parameters concatenated;
    noise_multiplier scales it into the Gaussian sigma. noise_scale is always
    exactly clip_norm * noise_multiplier. With enabled False the estimator
    degrades to the plain batch mean, bitwise.
    """

    clip_norm: float = 1.0
    noise_multiplier: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        if not self.clip_norm > 0:
            raise ConfigError(f"clip_norm must be > 0, got {self.clip_norm}")
        if self.noise_multiplier < 0:
            raise ConfigError(
                f"noise_multiplier must be >= 0, got {self.noise_multiplier}"
            )

    @property
    def noise_scale(self) -> float:
        return self.clip_norm * self.noise_multiplier


def clip_flat(
    per_sample_grads: np.ndarray, clip_norm: float
) -> tuple[np.ndarray, np.ndarray]:
    """Clip each row of (B, n_params) to l2 norm <= clip_norm.

    The norm is taken over ALL parameters concatenated (row-wise, "flat"), not
    per layer. Rows at or below the threshold pass through bitwise unchanged
    (they are scaled by exactly 1.0). Returns (clipped, pre_clip_norms);
    the input array is never mutated.
    """
    grads = np.asarray(per_sample_grads, dtype=np.float64)
    if grads.ndim != 2 or grads.shape[0] == 0:
        raise ShapeError(
            f"per-sample gradients must be a non-empty (batch, n_params) "
            f"matrix, got shape {grads.shape}"
        )
    if not clip_norm > 0:
        raise ConfigError(f"clip_norm must be > 0, got {clip_norm}")
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero((~np.isfinite(grads)).any(axis=1))[0])
        raise NumericError(f"non-finite gradient for sample {bad}", sample_index=bad)
    norms = np.sqrt(np.einsum("bp,bp->b", grads, grads))
    factors = np.ones_like(norms)
    over = norms > clip_norm
    factors[over] = clip_norm / norms[over]
    return grads * factors[:, None], norms


def gaussian_noise(
    shape: int | tuple[int, ...], sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """i.i.d. N(0, sigma^2) samples; sigma=0 returns zeros without consuming rng."""
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.zeros(shape)
    return rng.standard_normal(shape) * sigma


def dp_gradient(
    per_sample_grads: np.ndarray,
    batch_size: int,
    cfg: DpConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """DP-SGD gradient estimator over one batch.

    (sum_i clip_flat(g_i) + N(0, sigma^2 I)) / batch_size, with
    sigma = cfg.noise_scale. With cfg.enabled False this is the plain
    per-coordinate batch mean, bitwise — no clipping, no noise, no rng use.

    Args:
      per_sample_grads: (batch_size, n_params) matrix from per_sample_gradients.
      batch_size: expected row count (the divisor).
      cfg: mechanism parameters.
      rng: required when cfg.enabled and cfg.noise_scale > 0.
    """
    if batch_size <= 0:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    grads = np.asarray(per_sample_grads, dtype=np.float64)
    if grads.ndim != 2 or grads.shape[0] != batch_size:
        raise ShapeError(
            f"expected ({batch_size}, n_params) per-sample gradients, "
            f"got shape {grads.shape}"
        )
    if not cfg.enabled:
        return grads.mean(axis=0)
    clipped, _ = clip_flat(grads, cfg.clip_norm)
    total = clipped.sum(axis=0)
    sigma = cfg.noise_scale
    if sigma > 0:
        if rng is None:
            raise ConfigError("rng is required when DP noise is enabled")
        total += gaussian_noise(total.shape, sigma, rng)
    return total / batch_size
