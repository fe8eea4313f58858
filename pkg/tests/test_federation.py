"""Federated orchestration: aggregation, client rounds, determinism."""

import numpy as np
import pytest

from fedanomaly import (
    AggregationError,
    ClientState,
    ConfigError,
    DpConfig,
    FederationConfig,
    FederationError,
    NumericError,
    ReconstructionLoss,
    SplitMask,
    build_autoencoder,
    client_round_stream,
    client_update,
    encode_dataset,
    fed_avg,
    inject_anomalies,
    make_synthetic,
    merge_params,
    partition,
    run_federation,
    split_params,
)
from fedanomaly.federation import (
    central_init_stream,
    client_private_stream,
    selection_stream,
    write_history_csv,
)
from fedanomaly.model import autoencoder_specs, n_autoencoder_params
from fedanomaly.nn import (
    adam_step,
    batch_gradient,
    clipped_batch_gradient,
    fresh_adam_state,
    layers_from_vector,
    vector_from_layers,
)

# ---------------------------------------------------------------------------
# fed_avg


def test_fed_avg_hand_case():
    updates = [np.array([6.0]), np.array([3.0]), np.array([2.0])]
    out = fed_avg(updates, [1.0, 2.0, 3.0])
    # (6*1 + 3*2 + 2*3) / 6 = 3
    assert out.shape == (1,)
    assert abs(out[0] - 3.0) < 1e-15


def test_fed_avg_matches_weighted_mean():
    rng = np.random.default_rng(5)
    for _ in range(20):
        k = int(rng.integers(1, 6))
        updates = [rng.normal(size=37) for _ in range(k)]
        weights = rng.integers(1, 1000, size=k).astype(float)
        out = fed_avg(updates, weights)
        expect = np.average(np.stack(updates), axis=0, weights=weights)
        assert np.max(np.abs(out - expect)) < 1e-15


def test_fed_avg_single_client_identity():
    u = np.random.default_rng(0).normal(size=101)
    out = fed_avg([u], [123.0])
    assert np.array_equal(out, u)  # bitwise: scaled by exactly 1.0


def test_fed_avg_validation():
    with pytest.raises(AggregationError):
        fed_avg([], [])
    with pytest.raises(AggregationError):
        fed_avg([np.ones(3)], [1.0, 2.0])
    with pytest.raises(AggregationError):
        fed_avg([np.ones(3), np.ones(3)], [1.0, 0.0])
    with pytest.raises(AggregationError):
        fed_avg([np.ones(3), np.ones(4)], [1.0, 1.0])
    with pytest.raises(AggregationError):
        fed_avg([np.ones(3)], [float("nan")])


# ---------------------------------------------------------------------------
# config


def test_federation_config_validation():
    ok = dict(clients=2, partitions=4, rounds=3, iterations=5, batch_size=8)
    FederationConfig(**ok)
    with pytest.raises(ConfigError):
        FederationConfig(**{**ok, "clients": 5})  # more than partitions
    with pytest.raises(ConfigError):
        FederationConfig(**{**ok, "clients": 0})
    with pytest.raises(ConfigError):
        FederationConfig(**{**ok, "rounds": 0})
    with pytest.raises(ConfigError):
        FederationConfig(**{**ok, "iterations": -1})
    with pytest.raises(ConfigError):
        FederationConfig(**{**ok, "learning_rate": 0.0})
    with pytest.raises(ConfigError):
        FederationConfig(**{**ok, "optimizer": "lbfgs"})
    with pytest.raises(ConfigError):
        FederationConfig(**{**ok, "dp": {"enabled": False}})
    with pytest.raises(ConfigError):
        FederationConfig(**{**ok, "early_stop_patience": 0})
    with pytest.raises(ConfigError):
        FederationConfig(**{**ok, "seed": -1})
    # iterations=0 is allowed (degenerate pass-through round)
    FederationConfig(**{**ok, "iterations": 0})


# ---------------------------------------------------------------------------
# shared fixtures


def prepared(n=200, seed=3, gamma=2, n_global=2, n_local=3):
    raw = make_synthetic(n, seed=seed)
    data = inject_anomalies(raw, n_global, n_local, seed=[seed, 0])
    enc = encode_dataset(data)
    plan = partition(data, "iid", gamma, seed=[seed, 1])
    parts = [enc.rows(plan.indices(c)) for c in range(gamma)]
    loss = ReconstructionLoss(column_map=enc.column_map)
    return enc, parts, loss


def make_state(cid, part, d, cfg):
    own = build_autoencoder(d, client_private_stream(cfg.seed, cid))
    _, private = split_params(own, d, cfg.split)
    return ClientState(
        client_id=cid,
        data=part,
        private=private,
        adam=fresh_adam_state(
            n_autoencoder_params(d), learning_rate=cfg.learning_rate
        ),
    )


# ---------------------------------------------------------------------------
# client_update


def test_zero_iterations_returns_public_unchanged():
    _, parts, loss = prepared()
    d = parts[0].matrix.shape[1]
    cfg = FederationConfig(
        clients=1, partitions=2, rounds=1, iterations=0, batch_size=4, seed=9
    )
    state = make_state(0, parts[0], d, cfg)
    public, _ = split_params(
        build_autoencoder(d, central_init_stream(cfg.seed)), d, cfg.split
    )
    out, mean_loss = client_update(cfg, state, public.copy(), 1, loss)
    assert np.array_equal(out, public)
    assert np.isnan(mean_loss)


def test_client_update_replays_as_plain_optimizer_loop():
    # one client round == literal merge -> tau x (batch, grad, adam) -> split
    _, parts, loss = prepared()
    d = parts[0].matrix.shape[1]
    cfg = FederationConfig(
        clients=1, partitions=2, rounds=1, iterations=4, batch_size=6, seed=11
    )
    state = make_state(0, parts[0], d, cfg)
    public, _ = split_params(
        build_autoencoder(d, central_init_stream(cfg.seed)), d, cfg.split
    )
    expect_private = state.private.copy()
    expect_adam = fresh_adam_state(
        n_autoencoder_params(d), learning_rate=cfg.learning_rate
    )

    got_public, _ = client_update(cfg, state, public.copy(), 2, loss)

    specs = autoencoder_specs(d)
    params = merge_params(public, expect_private, d, cfg.split)
    rng = client_round_stream(cfg.seed, 0, 2)
    n = parts[0].matrix.shape[0]
    for _ in range(cfg.iterations):
        idx = rng.integers(0, n, size=cfg.batch_size)
        batch = parts[0].matrix[idx]
        grad, _ = batch_gradient(batch, batch, layers_from_vector(specs, params), loss)
        params, expect_adam = adam_step(params, grad, expect_adam)
    expect_public, expect_private = split_params(params, d, cfg.split)

    assert np.array_equal(got_public, expect_public)
    assert np.array_equal(state.private, expect_private)


def test_client_update_dp_route_replays_clipped_gradient():
    _, parts, loss = prepared()
    d = parts[0].matrix.shape[1]
    dp = DpConfig(clip_norm=0.5, noise_multiplier=0.3, enabled=True)
    cfg = FederationConfig(
        clients=1, partitions=2, rounds=1, iterations=3, batch_size=5, seed=21, dp=dp
    )
    state = make_state(0, parts[0], d, cfg)
    public, _ = split_params(
        build_autoencoder(d, central_init_stream(cfg.seed)), d, cfg.split
    )
    got_public, _ = client_update(cfg, state, public.copy(), 1, loss)

    specs = autoencoder_specs(d)
    params = merge_params(
        public,
        split_params(
            build_autoencoder(d, client_private_stream(cfg.seed, 0)), d, cfg.split
        )[1],
        d,
        cfg.split,
    )
    adam = fresh_adam_state(n_autoencoder_params(d), learning_rate=cfg.learning_rate)
    rng = client_round_stream(cfg.seed, 0, 1)
    n = parts[0].matrix.shape[0]
    for _ in range(cfg.iterations):
        idx = rng.integers(0, n, size=cfg.batch_size)
        batch = parts[0].matrix[idx]
        grad, _ = clipped_batch_gradient(
            batch,
            batch,
            layers_from_vector(specs, params),
            loss,
            clip_norm=dp.clip_norm,
            noise_scale=dp.noise_scale,
            rng=rng,
        )
        params, adam = adam_step(params, grad, adam)
    expect_public, _ = split_params(params, d, cfg.split)
    assert np.array_equal(got_public, expect_public)


def test_client_update_empty_partition():
    enc, parts, loss = prepared()
    d = parts[0].matrix.shape[1]
    cfg = FederationConfig(
        clients=1, partitions=2, rounds=1, iterations=1, batch_size=4
    )
    state = make_state(0, parts[0].rows(np.array([], dtype=np.intp)), d, cfg)
    public, _ = split_params(
        build_autoencoder(d, central_init_stream(cfg.seed)), d, cfg.split
    )
    with pytest.raises(FederationError):
        client_update(cfg, state, public, 1, loss)


# ---------------------------------------------------------------------------
# run_federation


def test_degenerate_federation_equals_centralized_training():
    # one partition, one client, DP off, no split: three rounds must replay a
    # plain centralized optimizer run bitwise.
    raw = make_synthetic(500, seed=7)
    data = inject_anomalies(raw, 2, 3, seed=[7, 0])
    enc = encode_dataset(data)
    loss = ReconstructionLoss(column_map=enc.column_map)
    cfg = FederationConfig(
        clients=1, partitions=1, rounds=3, iterations=5, batch_size=8, seed=13
    )
    result = run_federation(cfg, [enc], loss)

    d = enc.matrix.shape[1]
    specs = autoencoder_specs(d)
    params = build_autoencoder(d, central_init_stream(13))
    adam = fresh_adam_state(n_autoencoder_params(d), learning_rate=cfg.learning_rate)
    n = enc.matrix.shape[0]
    for round_index in (1, 2, 3):
        rng = client_round_stream(13, 0, round_index)
        for _ in range(cfg.iterations):
            idx = rng.integers(0, n, size=cfg.batch_size)
            batch = enc.matrix[idx]
            grad, _ = batch_gradient(batch, batch, layers_from_vector(specs, params), loss)
            params, adam = adam_step(params, grad, adam)

    assert np.array_equal(result.merged(0), params)
    assert np.array_equal(result.central_public, params)  # split off: all public


def test_run_federation_is_deterministic():
    _, parts, loss = prepared()
    cfg = FederationConfig(
        clients=1, partitions=2, rounds=3, iterations=4, batch_size=6, seed=17
    )
    a = run_federation(cfg, parts, loss)
    b = run_federation(cfg, parts, loss)
    assert np.array_equal(a.central_public, b.central_public)
    assert [r.params_digest for r in a.history] == [
        r.params_digest for r in b.history
    ]
    assert [r.selected for r in a.history] == [r.selected for r in b.history]


def test_selection_is_sorted_sample_without_replacement():
    _, parts, loss = prepared(n=300, gamma=4)
    cfg = FederationConfig(
        clients=2, partitions=4, rounds=6, iterations=1, batch_size=4, seed=19
    )
    result = run_federation(cfg, parts, loss)
    seen = set()
    for rec in result.history:
        assert len(rec.selected) == 2
        assert len(set(rec.selected)) == 2
        assert list(rec.selected) == sorted(rec.selected)
        assert all(0 <= c < 4 for c in rec.selected)
        seen.update(rec.selected)
    assert len(seen) > 2  # over six rounds the draw moves around

    # the selection stream alone reproduces the choices
    rng = selection_stream(19)
    for rec in result.history:
        expect = np.sort(rng.choice(4, size=2, replace=False))
        assert list(rec.selected) == [int(c) for c in expect]


def test_split_run_keeps_private_layers_local():
    _, parts, loss = prepared()
    d = parts[0].matrix.shape[1]
    mask = SplitMask(cut_encoder=1, cut_decoder=1)
    cfg = FederationConfig(
        clients=2,
        partitions=2,
        rounds=2,
        iterations=2,
        batch_size=4,
        seed=23,
        split=mask,
    )
    result = run_federation(cfg, parts, loss)
    total = n_autoencoder_params(d)
    boundary = 128 * (d + 1) + d * 129  # first encoder + last decoder layer
    assert result.central_public.shape == (total - boundary,)
    for state in result.clients:
        assert state.private.shape == (boundary,)
    # private initializations differ per client and stay different
    assert not np.array_equal(result.clients[0].private, result.clients[1].private)
    merged = result.merged(1)
    assert merged.shape == (total,)


def test_client_failure_names_client_and_round():
    enc, parts, loss = prepared()
    bad = parts[0].matrix.copy()
    bad[0, 0] = np.nan
    poisoned = parts[0]
    poisoned.matrix = bad
    cfg = FederationConfig(
        clients=2, partitions=2, rounds=1, iterations=50, batch_size=32, seed=3
    )
    with pytest.raises(NumericError) as err:
        run_federation(cfg, [poisoned, parts[1]], loss)
    assert "client 0, round 1" in str(err.value)


def test_partition_count_mismatch():
    _, parts, loss = prepared()
    cfg = FederationConfig(
        clients=1, partitions=3, rounds=1, iterations=1, batch_size=4
    )
    with pytest.raises(FederationError):
        run_federation(cfg, parts, loss)


def test_early_stopping_trips_after_patience():
    _, parts, loss = prepared()
    # rel_tol=1 makes any improvement count as "no improvement": the best can
    # never improve itself by a factor of 1, so stale grows every round.
    cfg = FederationConfig(
        clients=1,
        partitions=2,
        rounds=50,
        iterations=2,
        batch_size=4,
        seed=29,
        early_stop_patience=3,
        early_stop_rel_tol=1.0,
    )
    result = run_federation(cfg, parts, loss)
    assert result.stopped_early
    assert len(result.history) == 3


def test_history_csv_round_trip(tmp_path):
    _, parts, loss = prepared()
    cfg = FederationConfig(
        clients=2, partitions=2, rounds=2, iterations=2, batch_size=4, seed=31
    )
    result = run_federation(cfg, parts, loss)
    path = tmp_path / "history.csv"
    write_history_csv(result.history, path, config_digest="abc123")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "round,client_ids,client_losses,mean_loss,elapsed_ms,config_digest"
    assert len(lines) == 3
    first = lines[1].split(",")
    assert first[0] == "1"
    assert first[1] == "0;1"
    # float cells survive a text round trip exactly (repr)
    assert float(first[2].split(";")[0]) == result.history[0].client_losses[0]
    assert first[5] == "abc123"


def test_round_record_mean_loss_consistent():
    _, parts, loss = prepared()
    cfg = FederationConfig(
        clients=2, partitions=2, rounds=2, iterations=3, batch_size=4, seed=37
    )
    result = run_federation(cfg, parts, loss)
    for rec in result.history:
        assert rec.mean_loss == pytest.approx(np.mean(rec.client_losses), abs=1e-15)
        assert rec.round >= 1
