"""Synchronous federated training rounds over partitioned encoded data.

Each round: select a subset of clients, broadcast the current public
parameters, run every selected client's local update (optionally DP-noised,
optionally with private split layers that never leave the client), then
weight-average the returned public subsets by client record counts. The
orchestrator sees only public parameter vectors and scalar loss stats —
client matrices and private parameters stay inside ClientState.

Reproducibility: all randomness is derived from the run seed through tagged
SeedSequence streams, one per purpose:

    [seed, 0]            central parameter init
    [seed, 1, client]    per-client private parameter init
    [seed, 2]            client selection (consumed once per round)
    [seed, 3, client, round]   batch sampling + DP noise for one client-round

Client-round streams are independent, so executing clients in any order (or
in parallel) would reproduce the sequential result bitwise; this
implementation runs them sequentially in ascending client-id order.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dp import DpConfig
from .errors import (
    AggregationError,
    ConfigError,
    FedAnomalyError,
    FederationError,
    NumericError,
    ShapeError,
)
from .model import (
    SplitMask,
    autoencoder_specs,
    build_autoencoder,
    merge_params,
    n_autoencoder_params,
    split_params,
)
from .nn import (
    AdamState,
    adam_step,
    batch_gradient,
    clipped_batch_gradient,
    fresh_adam_state,
    layers_from_vector,
    sgd_step,
)

_STREAM_CENTRAL = 0
_STREAM_PRIVATE = 1
_STREAM_SELECTION = 2
_STREAM_CLIENT_ROUND = 3

HISTORY_COLUMNS = (
    "round",
    "client_ids",
    "client_losses",
    "mean_loss",
    "elapsed_ms",
    "config_digest",
)


def central_init_stream(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, _STREAM_CENTRAL])


def client_private_stream(seed: int, client_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, _STREAM_PRIVATE, client_id])


def selection_stream(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, _STREAM_SELECTION])


def client_round_stream(seed: int, client_id: int, round_index: int) -> np.random.Generator:
    """The one generator a client consumes during round `round_index` (1-based):
    per iteration, first the batch index draw, then (with DP noise on) the
    Gaussian draw."""
    return np.random.default_rng([seed, _STREAM_CLIENT_ROUND, client_id, round_index])


@dataclass(frozen=True)
class FederationConfig:
    """Everything a federated run depends on, except the data itself.

    clients = participants sampled per round; partitions = total clients the
    data was split across. iterations = local optimizer steps per selected
    client per round, each on a fresh with-replacement batch of batch_size.
    """

    clients: int
    partitions: int
    rounds: int
    iterations: int
    batch_size: int
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    optimizer: str = "adam"
    dp: DpConfig = field(default_factory=DpConfig)
    split: SplitMask = field(default_factory=SplitMask)
    early_stop_patience: int = 10
    early_stop_rel_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        for name in ("partitions", "rounds", "batch_size"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if not isinstance(self.clients, (int, np.integer)) or not (
            1 <= self.clients <= self.partitions
        ):
            raise ConfigError(
                f"clients must lie in [1, partitions={self.partitions}], "
                f"got {self.clients!r}"
            )
        # iterations=0 is a degenerate pass-through round, kept for tests
        if not isinstance(self.iterations, (int, np.integer)) or self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations!r}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(
                f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}"
            )
        if not isinstance(self.dp, DpConfig):
            raise ConfigError("dp must be a DpConfig")
        if not isinstance(self.split, SplitMask):
            raise ConfigError("split must be a SplitMask")
        if self.early_stop_patience < 1:
            raise ConfigError(
                f"early_stop_patience must be >= 1, got {self.early_stop_patience}"
            )
        if self.early_stop_rel_tol < 0:
            raise ConfigError(
                f"early_stop_rel_tol must be >= 0, got {self.early_stop_rel_tol}"
            )
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"seed must be an integer >= 0, got {self.seed!r}")


@dataclass
class ClientState:
    """One client's local, never-shared state."""

    client_id: int
    data: object  # anything with a .matrix of encoded rows
    private: np.ndarray
    adam: AdamState

    @property
    def n_records(self) -> int:
        return self.data.matrix.shape[0]


@dataclass(frozen=True)
class RoundRecord:
    round: int  # 1-based
    selected: tuple[int, ...]
    client_losses: tuple[float, ...]
    mean_loss: float
    params_digest: str
    elapsed_ms: float


def client_update(
    cfg: FederationConfig,
    state: ClientState,
    central_public: np.ndarray,
    round_index: int,
    loss,
) -> tuple[np.ndarray, float]:
    """Run one client's local optimization for one round.

    Merges the broadcast public parameters with the client's persistent
    private ones, takes cfg.iterations optimizer steps on with-replacement
    batches from the client's partition, stores the new private subset back
    into `state`, and returns (public parameter subset, mean training loss
    across the round's batches).
    """
    n = state.n_records
    if n == 0:
        raise FederationError(f"client {state.client_id} has an empty partition")
    matrix = state.data.matrix
    d = matrix.shape[1]
    specs = autoencoder_specs(d)
    params = merge_params(central_public, state.private, d, cfg.split)
    rng = client_round_stream(cfg.seed, state.client_id, round_index)

    loss_total = 0.0
    for _ in range(cfg.iterations):
        idx = rng.integers(0, n, size=cfg.batch_size)
        batch = matrix[idx]
        layers = layers_from_vector(specs, params)
        if cfg.dp.enabled:
            grad, losses = clipped_batch_gradient(
                batch, batch, layers, loss,
                clip_norm=cfg.dp.clip_norm,
                noise_scale=cfg.dp.noise_scale,
                rng=rng,
            )
        else:
            grad, losses = batch_gradient(batch, batch, layers, loss)
        loss_total += float(losses.mean())
        if cfg.optimizer == "adam":
            params, state.adam = adam_step(params, grad, state.adam)
        else:
            params = sgd_step(params, grad, cfg.learning_rate)

    public, private = split_params(params, d, cfg.split)
    state.private = private
    mean_loss = loss_total / cfg.iterations if cfg.iterations else float("nan")
    return public, mean_loss


def fed_avg(updates, weights) -> np.ndarray:
    """Record-count-weighted average of client parameter vectors.

    Weights are normalized over the participating clients only; a single
    client passes through bitwise (scaled by exactly 1.0).
    """
    updates = [np.asarray(u, dtype=np.float64) for u in updates]
    if not updates:
        raise AggregationError("fed_avg needs at least one update")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(updates),):
        raise AggregationError(
            f"{len(updates)} updates but weights of shape {weights.shape}"
        )
    if not np.all(weights > 0) or not np.all(np.isfinite(weights)):
        raise AggregationError(f"weights must be finite and > 0, got {weights}")
    shape = updates[0].shape
    for i, u in enumerate(updates[1:], start=1):
        if u.shape != shape:
            raise AggregationError(
                f"update 0 has shape {shape} but update {i} has {u.shape}"
            )
    total = weights.sum()
    acc = (weights[0] / total) * updates[0]
    for w, u in zip(weights[1:], updates[1:]):
        acc += (w / total) * u
    return acc


@dataclass
class FederationResult:
    central_public: np.ndarray
    clients: list[ClientState]
    history: list[RoundRecord]
    input_dim: int
    cfg: FederationConfig
    stopped_early: bool

    def merged(self, client_id: int = 0) -> np.ndarray:
        """Full parameter vector: central public + one client's private."""
        return merge_params(
            self.central_public,
            self.clients[client_id].private,
            self.input_dim,
            self.cfg.split,
        )


def run_federation(
    cfg: FederationConfig,
    partitions,
    loss,
    on_round=None,
) -> FederationResult:
    """Train for cfg.rounds communication rounds (early stopping permitting).

    `partitions` is one encoded dataset view per client, cfg.partitions of
    them. `on_round(record, central_public, clients)` is called after every
    aggregation, for logging/checkpointing. Stops early when the round mean
    loss has not improved its best value by a relative early_stop_rel_tol for
    early_stop_patience consecutive rounds.
    """
    if len(partitions) != cfg.partitions:
        raise FederationError(
            f"expected {cfg.partitions} partitions, got {len(partitions)}"
        )
    widths = {p.matrix.shape[1] for p in partitions}
    if len(widths) != 1:
        raise ShapeError(f"partitions disagree on encoded width: {sorted(widths)}")
    d = widths.pop()
    for cid, part in enumerate(partitions):
        if part.matrix.shape[0] == 0:
            raise FederationError(f"client {cid} has an empty partition")

    n_params = n_autoencoder_params(d)
    full = build_autoencoder(d, central_init_stream(cfg.seed))
    central_public, _ = split_params(full, d, cfg.split)

    clients = []
    for cid in range(cfg.partitions):
        own = build_autoencoder(d, client_private_stream(cfg.seed, cid))
        _, private = split_params(own, d, cfg.split)
        clients.append(
            ClientState(
                client_id=cid,
                data=partitions[cid],
                private=private,
                adam=fresh_adam_state(
                    n_params,
                    learning_rate=cfg.learning_rate,
                    beta1=cfg.beta1,
                    beta2=cfg.beta2,
                    epsilon=cfg.adam_epsilon,
                ),
            )
        )

    select_rng = selection_stream(cfg.seed)
    history: list[RoundRecord] = []
    best = float("inf")
    stale = 0
    stopped_early = False

    for round_index in range(1, cfg.rounds + 1):
        t0 = time.perf_counter()
        selected = np.sort(
            select_rng.choice(cfg.partitions, size=cfg.clients, replace=False)
        )
        updates = []
        losses = []
        for cid in selected:
            state = clients[int(cid)]
            try:
                public, mean_loss = client_update(
                    cfg, state, central_public, round_index, loss
                )
            except NumericError as exc:
                raise NumericError(
                    f"client {int(cid)}, round {round_index}: {exc}",
                    sample_index=exc.sample_index,
                ) from exc
            except FedAnomalyError as exc:
                raise FederationError(
                    f"client {int(cid)}, round {round_index}: {exc}"
                ) from exc
            updates.append(public)
            losses.append(mean_loss)

        central_public = fed_avg(
            updates, [clients[int(cid)].n_records for cid in selected]
        )
        round_mean = float(np.mean(losses))
        record = RoundRecord(
            round=round_index,
            selected=tuple(int(c) for c in selected),
            client_losses=tuple(losses),
            mean_loss=round_mean,
            params_digest=hashlib.sha256(
                np.ascontiguousarray(central_public).tobytes()
            ).hexdigest(),
            elapsed_ms=(time.perf_counter() - t0) * 1e3,
        )
        history.append(record)
        if on_round is not None:
            on_round(record, central_public, clients)

        if round_mean < best * (1.0 - cfg.early_stop_rel_tol):
            best = round_mean
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                stopped_early = True
                break

    return FederationResult(
        central_public=central_public,
        clients=clients,
        history=history,
        input_dim=d,
        cfg=cfg,
        stopped_early=stopped_early,
    )


def write_history_csv(
    history, path: str | Path, config_digest: str | None = None
) -> None:
    """One row per executed round; multi-value cells are ';'-joined."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for rec in history:
            writer.writerow(
                [
                    rec.round,
                    ";".join(str(c) for c in rec.selected),
                    ";".join(repr(v) for v in rec.client_losses),
                    repr(rec.mean_loss),
                    f"{rec.elapsed_ms:.3f}",
                    config_digest or "",
                ]
            )
