"""Dense-network numerical kernel.

Forward pass, per-sample backpropagation and Adam for fixed chains of dense
layers, all in float64 numpy. Parameters live in a single flat vector whose
layout is [W1, b1, W2, b2, ...] (row-major weights); `LayerParams` objects are
zero-copy views into that vector. Everything here is a pure function of its
inputs — PRNG state is always passed explicitly — so identical seeds and
inputs give bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .validation import as_matrix, check_same_rows

# --------------------------------------------------------------------------
# activations


@dataclass(frozen=True)
class LeakyRelu:
    """f(x) = x for x >= 0, alpha * x otherwise."""

    alpha: float = 0.4

    def __post_init__(self):
        if not self.alpha > 0:
            raise ShapeError(f"LeakyRelu alpha must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class Tanh:
    pass


Activation = LeakyRelu | Tanh


def activate(pre: np.ndarray, activation: Activation) -> np.ndarray:
    if isinstance(activation, Tanh):
        return np.tanh(pre)
    return np.where(pre >= 0, pre, activation.alpha * pre)


def activation_grad(pre: np.ndarray, post: np.ndarray, activation: Activation) -> np.ndarray:
    """Derivative w.r.t. the pre-activation, elementwise."""
    if isinstance(activation, Tanh):
        return 1.0 - post * post
    return np.where(pre >= 0, 1.0, activation.alpha)


# --------------------------------------------------------------------------
# layers and flat parameter layout


@dataclass
class LayerParams:
    """One dense layer: out = activation(weights @ x + bias)."""

    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: Activation

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got ndim={self.weights.ndim}")
        if self.bias.ndim != 1 or self.bias.shape[0] != self.weights.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape} must equal weight rows {self.weights.shape[0]}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def n_params(self) -> int:
        return self.out_dim * (self.in_dim + 1)


@dataclass(frozen=True)
class LayerSpec:
    """Shape + activation of one layer, without parameter storage."""

    in_dim: int
    out_dim: int
    activation: Activation

    @property
    def n_params(self) -> int:
        return self.out_dim * (self.in_dim + 1)


def check_chain(specs: Sequence[LayerSpec]) -> None:
    for prev, nxt in zip(specs, specs[1:]):
        if prev.out_dim != nxt.in_dim:
            raise ShapeError(
                f"layer chain mismatch: {prev.out_dim} -> {nxt.in_dim}"
            )


def network_size(specs: Sequence[LayerSpec]) -> int:
    return sum(s.n_params for s in specs)


def param_slices(specs: Sequence[LayerSpec]) -> list[tuple[slice, slice]]:
    """(weight_slice, bias_slice) into the flat vector, per layer."""
    out = []
    pos = 0
    for s in specs:
        nw = s.out_dim * s.in_dim
        out.append((slice(pos, pos + nw), slice(pos + nw, pos + nw + s.out_dim)))
        pos += s.n_params
    return out


def layers_from_vector(specs: Sequence[LayerSpec], vector: np.ndarray) -> list[LayerParams]:
    """Zero-copy LayerParams views into `vector`."""
    if vector.shape != (network_size(specs),):
        raise ShapeError(
            f"parameter vector length {vector.shape} does not match layout "
            f"({network_size(specs)},)"
        )
    layers = []
    for spec, (wsl, bsl) in zip(specs, param_slices(specs)):
        layers.append(
            LayerParams(
                vector[wsl].reshape(spec.out_dim, spec.in_dim),
                vector[bsl],
                spec.activation,
            )
        )
    return layers


def vector_from_layers(layers: Sequence[LayerParams]) -> np.ndarray:
    parts = []
    for layer in layers:
        parts.append(layer.weights.reshape(-1))
        parts.append(layer.bias)
    return np.concatenate(parts)


def specs_from_layers(layers: Sequence[LayerParams]) -> tuple[LayerSpec, ...]:
    return tuple(LayerSpec(l.in_dim, l.out_dim, l.activation) for l in layers)


def init_network(specs: Sequence[LayerSpec], rng: np.random.Generator) -> np.ndarray:
    """Seeded init: weights uniform in [-1/sqrt(in_dim), +1/sqrt(in_dim)], biases zero."""
    check_chain(specs)
    vec = np.zeros(network_size(specs))
    for spec, (wsl, _) in zip(specs, param_slices(specs)):
        limit = 1.0 / np.sqrt(spec.in_dim)
        vec[wsl] = rng.uniform(-limit, limit, size=spec.out_dim * spec.in_dim)
    return vec


# --------------------------------------------------------------------------
# forward


def dense_forward(x: np.ndarray, layer: LayerParams) -> np.ndarray:
    """activation(x @ W.T + b) for a batch of rows."""
    x = as_matrix(x, "input")
    if x.shape[1] != layer.in_dim:
        raise ShapeError(
            f"input has {x.shape[1]} columns, layer expects {layer.in_dim}"
        )
    return activate(x @ layer.weights.T + layer.bias, layer.activation)


@dataclass
class ForwardCache:
    """Per-layer pre/post activations from one forward pass.

    posts[0] is the network input; posts[l] is layer l's output (1-based over
    len(preacts) layers), so posts has one more entry than preacts.
    """

    preacts: list[np.ndarray] = field(default_factory=list)
    posts: list[np.ndarray] = field(default_factory=list)


def forward_all(
    x: np.ndarray, layers: Sequence[LayerParams]
) -> tuple[np.ndarray, ForwardCache]:
    """Run the full chain; cache holds everything backprop needs."""
    x = as_matrix(x, "input")
    cache = ForwardCache(posts=[x])
    h = x
    for layer in layers:
        if h.shape[1] != layer.in_dim:
            raise ShapeError(
                f"layer chain mismatch: have {h.shape[1]} features, "
                f"layer expects {layer.in_dim}"
            )
        pre = h @ layer.weights.T + layer.bias
        h = activate(pre, layer.activation)
        cache.preacts.append(pre)
        cache.posts.append(h)
    return h, cache


def matmul_rows(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """x @ w.T with a row-stable reduction (w is (out_dim, in_dim)).

    BLAS gemm on this platform rounds differently depending on the number of
    rows in x, which would make batched scoring depend on the batch size. The
    non-optimized einsum path reduces each output element in a fixed order
    regardless of batch shape, so row b of the result depends only on row b of
    x. Slower than BLAS; used only where bitwise batch invariance is promised.
    """
    return np.einsum("bi,oi->bo", x, w)


def forward_all_rowstable(x: np.ndarray, layers: Sequence[LayerParams]) -> np.ndarray:
    """Forward pass whose row b output is bitwise independent of other rows."""
    h = as_matrix(x, "input")
    for layer in layers:
        if h.shape[1] != layer.in_dim:
            raise ShapeError(
                f"layer chain mismatch: have {h.shape[1]} features, "
                f"layer expects {layer.in_dim}"
            )
        h = activate(matmul_rows(h, layer.weights) + layer.bias, layer.activation)
    return h


# --------------------------------------------------------------------------
# losses

# A loss object must provide:
#   per_sample(outputs, targets) -> (batch,) loss values
#   output_grad(outputs, targets) -> (batch, dim) d(loss)/d(output)
# ReconstructionLoss in loss.py follows the same duck type.


class HalfSquaredError:
    """L(o, t) = 0.5 * sum((o - t)^2) per sample. Gradient is (o - t)."""

    def per_sample(self, outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
        d = outputs - targets
        return 0.5 * np.einsum("bd,bd->b", d, d)

    def output_grad(self, outputs: np.ndarray, targets: np.ndarray) -> np.ndarray:
        return outputs - targets


# --------------------------------------------------------------------------
# backward


def _backward_deltas(
    layers: Sequence[LayerParams], cache: ForwardCache, dout: np.ndarray
) -> list[np.ndarray]:
    """Pre-activation gradients per layer, back to front, returned in layer order."""
    n = len(layers)
    deltas: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    delta = dout * activation_grad(cache.preacts[-1], cache.posts[-1], layers[-1].activation)
    for li in range(n - 1, -1, -1):
        deltas[li] = delta
        if li > 0:
            dx = delta @ layers[li].weights
            delta = dx * activation_grad(
                cache.preacts[li - 1], cache.posts[li], layers[li - 1].activation
            )
    return deltas


def per_sample_gradients(
    batch: np.ndarray,
    targets: np.ndarray,
    layers: Sequence[LayerParams],
    loss,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample loss gradients w.r.t. every weight and bias.

    Args:
      batch: (B, in_dim) inputs.
      targets: (B, out_dim) targets, same row count.
      layers: the network.
      loss: loss object (see module comment).

    Returns:
      (grads, losses): grads is (B, n_params) with the flat [W1,b1,W2,b2,...]
      layout — row b is the full gradient for sample b alone — and losses is
      the (B,) per-sample loss vector. The mean over rows of grads equals the
      batch-mean gradient.

    Raises:
      NumericError: a per-sample loss came out non-finite (carries the index).
    """
    batch = as_matrix(batch, "batch")
    targets = as_matrix(targets, "targets")
    check_same_rows(batch, targets, "batch", "targets")
    out, cache = forward_all(batch, layers)
    losses = loss.per_sample(out, targets)
    if not np.all(np.isfinite(losses)):
        idx = int(np.flatnonzero(~np.isfinite(losses))[0])
        raise NumericError(f"non-finite loss for sample {idx}", sample_index=idx)
    dout = loss.output_grad(out, targets)
    deltas = _backward_deltas(layers, cache, dout)

    specs = specs_from_layers(layers)
    n_params = network_size(specs)
    bsz = batch.shape[0]
    grads = np.empty((bsz, n_params))
    for (wsl, bsl), spec, delta, x in zip(param_slices(specs), specs, deltas, cache.posts):
        np.einsum(
            "bo,bi->boi", delta, x, out=grads[:, wsl].reshape(bsz, spec.out_dim, spec.in_dim)
        )
        grads[:, bsl] = delta
    return grads, losses


def batch_gradient(
    batch: np.ndarray,
    targets: np.ndarray,
    layers: Sequence[LayerParams],
    loss,
) -> tuple[np.ndarray, np.ndarray]:
    """Batch-mean gradient without materializing per-sample gradients.

    Same mathematical quantity as per_sample_gradients(...)[0].mean(axis=0)
    (it differs only in float reduction order) at a fraction of the memory
    traffic. Returns (grad_vector, per_sample_losses).
    """
    batch = as_matrix(batch, "batch")
    targets = as_matrix(targets, "targets")
    check_same_rows(batch, targets, "batch", "targets")
    out, cache = forward_all(batch, layers)
    losses = loss.per_sample(out, targets)
    if not np.all(np.isfinite(losses)):
        idx = int(np.flatnonzero(~np.isfinite(losses))[0])
        raise NumericError(f"non-finite loss for sample {idx}", sample_index=idx)
    dout = loss.output_grad(out, targets)
    deltas = _backward_deltas(layers, cache, dout)

    specs = specs_from_layers(layers)
    grad = np.empty(network_size(specs))
    bsz = batch.shape[0]
    for (wsl, bsl), spec, delta, x in zip(param_slices(specs), specs, deltas, cache.posts):
        np.matmul(delta.T, x, out=grad[wsl].reshape(spec.out_dim, spec.in_dim))
        grad[bsl] = delta.sum(axis=0)
    grad /= bsz
    return grad, losses


def clipped_batch_gradient(
    batch: np.ndarray,
    targets: np.ndarray,
    layers: Sequence[LayerParams],
    loss,
    clip_norm: float,
    noise_scale: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample-clipped (and optionally noised) batch gradient, fused.

    Computes (sum_b min(1, clip_norm/||g_b||) * g_b + N(0, noise_scale^2 I))
    / batch_size without materializing the (B, n_params) per-sample gradient
    matrix: a dense layer's per-sample gradient is the outer product
    delta_b x_b^T (plus delta_b for the bias), so its squared norm is
    ||delta_b||^2 * (1 + ||x_b||^2) and the clipped sum is one matmul of the
    factor-scaled deltas. Noise is drawn from `rng` with the same call
    sequence as the materialized route, so both consume the generator
    identically. Rows at or below clip_norm are scaled by exactly 1.0.

    Returns (gradient vector, per-sample losses).
    """
    batch = as_matrix(batch, "batch")
    targets = as_matrix(targets, "targets")
    check_same_rows(batch, targets, "batch", "targets")
    if not clip_norm > 0:
        raise ConfigError(f"clip_norm must be > 0, got {clip_norm}")
    if noise_scale < 0:
        raise ConfigError(f"noise_scale must be >= 0, got {noise_scale}")
    if noise_scale > 0 and rng is None:
        raise ConfigError("rng is required when noise_scale > 0")

    out, cache = forward_all(batch, layers)
    losses = loss.per_sample(out, targets)
    if not np.all(np.isfinite(losses)):
        idx = int(np.flatnonzero(~np.isfinite(losses))[0])
        raise NumericError(f"non-finite loss for sample {idx}", sample_index=idx)
    dout = loss.output_grad(out, targets)
    deltas = _backward_deltas(layers, cache, dout)

    bsz = batch.shape[0]
    sqnorms = np.zeros(bsz)
    for delta, x in zip(deltas, cache.posts):
        dsq = np.einsum("bo,bo->b", delta, delta)
        xsq = np.einsum("bi,bi->b", x, x)
        sqnorms += dsq * (1.0 + xsq)
    norms = np.sqrt(sqnorms)
    if not np.all(np.isfinite(norms)):
        idx = int(np.flatnonzero(~np.isfinite(norms))[0])
        raise NumericError(f"non-finite gradient for sample {idx}", sample_index=idx)
    factors = np.ones(bsz)
    over = norms > clip_norm
    factors[over] = clip_norm / norms[over]

    specs = specs_from_layers(layers)
    grad = np.empty(network_size(specs))
    for (wsl, bsl), spec, delta, x in zip(param_slices(specs), specs, deltas, cache.posts):
        scaled = delta * factors[:, None]
        np.matmul(scaled.T, x, out=grad[wsl].reshape(spec.out_dim, spec.in_dim))
        grad[bsl] = scaled.sum(axis=0)
    if noise_scale > 0:
        grad += rng.standard_normal(grad.shape) * noise_scale
    grad /= bsz
    return grad, losses


# --------------------------------------------------------------------------
# optimizers


@dataclass
class AdamState:
    """Adam moments over a flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.m.shape != self.v.shape:
            raise ShapeError("m and v must have identical shapes")
        if self.step < 0:
            raise ShapeError(f"step must be >= 0, got {self.step}")
        for name in ("beta1", "beta2"):
            val = getattr(self, name)
            if not (0.0 < val < 1.0):
                raise ShapeError(f"{name} must lie in (0, 1), got {val}")


def fresh_adam_state(
    n_params: int,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> AdamState:
    return AdamState(
        m=np.zeros(n_params),
        v=np.zeros(n_params),
        step=0,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
        learning_rate=learning_rate,
    )


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update. Pure: returns new params and state."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.m.shape}"
        )
    step = state.step + 1  # incremented before bias correction
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = AdamState(
        m=m,
        v=v,
        step=step,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
        learning_rate=state.learning_rate,
    )
    return new_params, new_state


def sgd_step(params: np.ndarray, grads: np.ndarray, learning_rate: float) -> np.ndarray:
    """Plain gradient step, for runs that want the unadorned update rule."""
    if params.shape != grads.shape:
        raise ShapeError(f"shape mismatch: params {params.shape}, grads {grads.shape}")
    return params - learning_rate * grads
