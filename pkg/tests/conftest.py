"""Shared helpers: random small networks and toy datasets."""

import numpy as np

from fedanomaly.nn import (
    LayerSpec,
    LeakyRelu,
    Tanh,
    forward_all,
    init_network,
    layers_from_vector,
)


def random_specs(rng, n_layers=None, max_dim=8):
    """A short random dense chain mixing leaky-relu and tanh layers."""
    if n_layers is None:
        n_layers = int(rng.integers(1, 4))
    dims = [int(d) for d in rng.integers(1, max_dim + 1, size=n_layers + 1)]
    specs = []
    for i in range(n_layers):
        act = Tanh() if rng.random() < 0.3 else LeakyRelu(0.4)
        specs.append(LayerSpec(dims[i], dims[i + 1], act))
    return tuple(specs)


def random_net(rng, specs=None, kink_margin=1e-3, max_tries=200):
    """(specs, params, batch) with every leaky pre-activation clear of 0.

    Finite-difference probes shift pre-activations by O(h); keeping them at
    least kink_margin away from the leaky-relu kink makes the central
    difference a valid derivative estimate at every probed point.
    """
    if specs is None:
        specs = random_specs(rng)
    params = init_network(specs, rng)
    for _ in range(max_tries):
        batch = rng.uniform(-2.0, 2.0, size=(1, specs[0].in_dim))
        _, cache = forward_all(batch, layers_from_vector(specs, params))
        margin = min(
            (
                float(np.min(np.abs(pre)))
                for pre, spec in zip(cache.preacts, specs)
                if isinstance(spec.activation, LeakyRelu)
            ),
            default=np.inf,
        )
        if margin > kink_margin:
            return specs, params, batch
    raise AssertionError("could not find a kink-free probe point")


def finite_difference_gradient(fn, params, h=1e-5):
    """Central finite differences of scalar fn over a flat vector."""
    grad = np.empty_like(params)
    for k in range(params.size):
        bumped = params.copy()
        bumped[k] = params[k] + h
        hi = fn(bumped)
        bumped[k] = params[k] - h
        lo = fn(bumped)
        grad[k] = (hi - lo) / (2.0 * h)
    return grad
