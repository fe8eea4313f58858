"""CSV loading, anomaly injection, and partitioning."""

from collections import Counter

import numpy as np
import pytest

from fedanomaly.data import (
    Label,
    DatasetSchema,
    PartitionPlan,
    RawDataset,
    _top_quartile_values,
    inject_anomalies,
    load_csv,
    partition,
)
from fedanomaly.errors import (
    DataError,
    InjectionError,
    PartitionError,
    SchemaError,
    ShapeError,
)
from fedanomaly.synthetic import make_synthetic


TOY_SCHEMA = DatasetSchema(
    categorical=("dept", "acct", "key"), numeric=("amt",), department="dept"
)
_TOY_CARDS = (8, 12, 10)


def toy_dataset(n=24, seed=0):
    """Balanced value counts (>= 2 each), loose coupling between columns."""
    rng = np.random.default_rng(seed)
    cols = []
    for j, card in enumerate(_TOY_CARDS):
        base = np.arange(n) % card
        rng.shuffle(base)
        cols.append([f"c{j}_{v}" for v in base])
    return RawDataset(
        schema=TOY_SCHEMA,
        cat_columns=cols,
        numeric=rng.uniform(1.0, 9.0, size=(n, 1)),
        labels=np.zeros(n, dtype=np.int64),
        departments=list(cols[0]),
    )


# -------------------------------------------------------------------- schema


def test_schema_validation():
    with pytest.raises(SchemaError):
        DatasetSchema(categorical=(), numeric=("x",), department="d")
    with pytest.raises(SchemaError):
        DatasetSchema(categorical=("c",), numeric=(), department="d")
    with pytest.raises(SchemaError):
        DatasetSchema(categorical=("c", "c"), numeric=("x",), department="d")
    with pytest.raises(SchemaError):
        DatasetSchema(categorical=("c",), numeric=("c",), department="d")
    with pytest.raises(SchemaError):
        DatasetSchema(categorical=("c",), numeric=("x",), department="")


def test_raw_dataset_validation():
    with pytest.raises(ShapeError):
        RawDataset(
            schema=TOY_SCHEMA,
            cat_columns=[["a"], ["b", "c"], ["d"]],
            numeric=np.zeros((1, 1)),
            labels=np.zeros(1, dtype=np.int64),
            departments=["a"],
        )
    with pytest.raises(ShapeError):
        RawDataset(
            schema=TOY_SCHEMA,
            cat_columns=[["a"], ["b"], ["d"]],
            numeric=np.zeros((1, 2)),  # schema says one numeric column
            labels=np.zeros(1, dtype=np.int64),
            departments=["a"],
        )


# ------------------------------------------------------------------- loading


def _write(tmp_path, text, name="toy.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_round_trip(tmp_path):
    path = _write(
        tmp_path,
        "dept,acct,key,amt,extra\nsales,a1,k1,10.5,x\nops,a2,k2,-3,y\nsales,a1,k1,0.25,z\n",
    )
    data = load_csv(path, TOY_SCHEMA)
    assert data.n_records == 3
    assert data.cat_columns[0] == ["sales", "ops", "sales"]
    assert data.cat_columns[1] == ["a1", "a2", "a1"]
    assert np.array_equal(data.numeric[:, 0], [10.5, -3.0, 0.25])
    assert data.departments == ["sales", "ops", "sales"]
    assert np.array_equal(data.labels, np.zeros(3, dtype=np.int64))
    assert data.label_counts()[Label.NORMAL] == 3


def test_load_csv_handles_bom(tmp_path):
    path = _write(tmp_path, "﻿dept,acct,key,amt\nsales,a1,k1,1\n")
    data = load_csv(path, TOY_SCHEMA)
    assert data.n_records == 1


def test_load_csv_missing_column(tmp_path):
    path = _write(tmp_path, "dept,key,amt\nsales,k1,1\n")
    with pytest.raises(SchemaError) as exc:
        load_csv(path, TOY_SCHEMA)
    assert "acct" in str(exc.value)


def test_load_csv_empty_file(tmp_path):
    with pytest.raises(SchemaError):
        load_csv(_write(tmp_path, ""), TOY_SCHEMA)


def test_load_csv_bad_numeric(tmp_path):
    path = _write(tmp_path, "dept,acct,key,amt\nsales,a1,k1,1\nops,a2,k2,oops\n")
    with pytest.raises(DataError) as exc:
        load_csv(path, TOY_SCHEMA)
    assert exc.value.row == 2
    assert exc.value.column == "amt"


def test_load_csv_ragged_row(tmp_path):
    path = _write(tmp_path, "dept,acct,key,amt\nsales,a1\n")
    with pytest.raises(DataError) as exc:
        load_csv(path, TOY_SCHEMA)
    assert exc.value.row == 1


def test_load_csv_rejects_non_finite(tmp_path):
    # float() accepts these; the scaler would silently zero the column
    for text in ("nan", "inf", "-inf"):
        path = _write(tmp_path, f"dept,acct,key,amt\nsales,a1,k1,1\nops,a2,k2,{text}\n")
        with pytest.raises(DataError) as exc:
            load_csv(path, TOY_SCHEMA)
        assert exc.value.row == 2
        assert exc.value.column == "amt"
        assert "non-finite" in str(exc.value)


# ----------------------------------------------------------------- injection


def test_top_quartile_values():
    col = ["a"] * 5 + ["b"] * 3 + ["c"] * 3 + ["d"] * 2 + ["e", "f", "g", "h"]
    # 8 distinct -> top ceil(8/4) = 2; b beats c on first occurrence
    assert _top_quartile_values(col) == ["a", "b"]
    assert _top_quartile_values(["x"]) == ["x"]


def test_injection_counts_and_label_order():
    data = toy_dataset()
    out = inject_anomalies(data, 3, 4, seed=1)
    assert out.n_records == data.n_records + 7
    assert np.array_equal(out.labels[: data.n_records], np.zeros(data.n_records))
    appended = out.labels[data.n_records :]
    assert np.array_equal(appended, [1, 1, 1, 2, 2, 2, 2])
    counts = out.label_counts()
    assert counts[Label.GLOBAL] == 3 and counts[Label.LOCAL] == 4


def test_injection_does_not_mutate_input():
    data = toy_dataset()
    before_cols = [list(c) for c in data.cat_columns]
    before_num = data.numeric.copy()
    inject_anomalies(data, 2, 2, seed=2)
    assert [list(c) for c in data.cat_columns] == before_cols
    assert np.array_equal(data.numeric, before_num)


def test_global_values_are_fresh_singletons():
    data = toy_dataset()
    out = inject_anomalies(data, 3, 0, seed=3)
    n = data.n_records
    for j, col in enumerate(out.cat_columns):
        original_vocab = set(data.cat_columns[j])
        counts = Counter(col)
        for i in range(n, n + 3):
            assert col[i] not in original_vocab
            assert counts[col[i]] == 1


def test_global_numerics_exceed_observed_range():
    data = toy_dataset()
    col_max = data.numeric.max(axis=0)
    out = inject_anomalies(data, 5, 0, seed=4)
    injected = out.numeric[data.n_records :]
    assert np.all(injected > col_max)
    assert np.all(injected <= 2.0 * col_max)


def test_local_values_frequent_but_combination_unseen():
    data = toy_dataset(n=60, seed=5)
    out = inject_anomalies(data, 0, 5, seed=5)
    n = data.n_records
    frequent = [set(_top_quartile_values(col)) for col in data.cat_columns]
    seen = set(zip(*data.cat_columns))
    originals = {tuple(row) for row in data.numeric}
    for i in range(n, n + 5):
        combo = tuple(col[i] for col in out.cat_columns)
        assert combo not in seen
        for j, value in enumerate(combo):
            assert value in frequent[j]
        # numerics are copied verbatim from some original record
        assert tuple(out.numeric[i]) in originals


def test_local_departments_follow_the_combo():
    data = toy_dataset(n=60, seed=6)
    out = inject_anomalies(data, 0, 3, seed=6)
    n = data.n_records
    for i in range(n, n + 3):
        assert out.departments[i] == out.cat_columns[0][i]


def test_zero_injection_is_a_plain_copy():
    data = toy_dataset()
    out = inject_anomalies(data, 0, 0, seed=7)
    assert out.n_records == data.n_records
    assert out.cat_columns == data.cat_columns
    assert np.array_equal(out.numeric, data.numeric)
    assert out.cat_columns is not data.cat_columns


def test_injection_determinism():
    data = toy_dataset()
    a = inject_anomalies(data, 4, 4, seed=8)
    b = inject_anomalies(data, 4, 4, seed=8)
    assert a.cat_columns == b.cat_columns
    assert np.array_equal(a.numeric, b.numeric)
    c = inject_anomalies(data, 4, 4, seed=9)
    assert not np.array_equal(a.numeric, c.numeric)


def test_injection_validation():
    data = toy_dataset()
    with pytest.raises(InjectionError):
        inject_anomalies(data, -1, 0, seed=0)
    empty = RawDataset(
        schema=TOY_SCHEMA,
        cat_columns=[[], [], []],
        numeric=np.empty((0, 1)),
        labels=np.zeros(0, dtype=np.int64),
        departments=[],
    )
    with pytest.raises(InjectionError):
        inject_anomalies(empty, 1, 0, seed=0)


def test_local_injection_exhaustion_on_dense_data():
    # a single constant attribute leaves no unseen combination to build
    schema = DatasetSchema(categorical=("c",), numeric=("x",), department="c")
    data = RawDataset(
        schema=schema,
        cat_columns=[["only", "only", "only"]],
        numeric=np.ones((3, 1)),
        labels=np.zeros(3, dtype=np.int64),
        departments=["only"] * 3,
    )
    with pytest.raises(InjectionError):
        inject_anomalies(data, 0, 1, seed=0)


def test_global_labels_recoverable_by_frequency_scan():
    # the defining property of a global anomaly: it carries attribute values
    # nothing else in the augmented dataset has
    for raw, n_g, n_l in (
        (toy_dataset(n=80, seed=10), 4, 6),
        (make_synthetic(3000, seed=1), 20, 40),
    ):
        out = inject_anomalies(raw, n_g, n_l, seed=11)
        counts = [Counter(col) for col in out.cat_columns]
        flagged = {
            i
            for i in range(out.n_records)
            if any(counts[j][col[i]] == 1 for j, col in enumerate(out.cat_columns))
        }
        actual = set(np.flatnonzero(out.labels == Label.GLOBAL).tolist())
        assert flagged == actual


# -------------------------------------------------------------- partitioning


def test_partition_plan_validation():
    with pytest.raises(PartitionError):
        PartitionPlan(gamma=0, mode="iid", assignments=np.zeros(3, dtype=np.int64))
    with pytest.raises(PartitionError):
        PartitionPlan(gamma=2, mode="weird", assignments=np.zeros(3, dtype=np.int64))
    with pytest.raises(PartitionError):
        PartitionPlan(gamma=2, mode="iid", assignments=np.array([0, 2]))
    plan = PartitionPlan(gamma=2, mode="iid", assignments=np.array([0, 1, 0]))
    assert np.array_equal(plan.sizes(), [2, 1])
    assert np.array_equal(plan.indices(0), [0, 2])
    assert [a.tolist() for a in plan.all_indices()] == [[0, 2], [1]]


def test_iid_partition_basics():
    data = inject_anomalies(toy_dataset(n=200, seed=12), 3, 3, seed=12)
    plan = partition(data, "iid", 4, seed=13)
    assert plan.assignments.shape == (data.n_records,)
    assert plan.sizes().sum() == data.n_records
    assert np.all((plan.assignments >= 0) & (plan.assignments < 4))
    # anomalies ride with the first partition
    assert np.all(plan.assignments[data.labels != Label.NORMAL] == 0)
    again = partition(data, "iid", 4, seed=13)
    assert np.array_equal(plan.assignments, again.assignments)
    assert not np.array_equal(
        plan.assignments, partition(data, "iid", 4, seed=14).assignments
    )


def test_iid_gamma_one_puts_everything_in_partition_zero():
    data = toy_dataset(n=30, seed=15)
    plan = partition(data, "iid", 1, seed=0)
    assert np.array_equal(plan.assignments, np.zeros(30, dtype=np.int64))


def test_noniid_greedy_hand_case():
    # department sizes 50/30/20/20 into two partitions: the greedy packer
    # puts 50 alone, then 30 and the first 20 together, then ties break low
    sizes = {"a": 50, "b": 30, "c": 20, "d": 20}
    depts = [name for name, k in sizes.items() for _ in range(k)]
    n = len(depts)
    data = RawDataset(
        schema=TOY_SCHEMA,
        cat_columns=[list(depts), ["x"] * n, ["y"] * n],
        numeric=np.ones((n, 1)),
        labels=np.zeros(n, dtype=np.int64),
        departments=list(depts),
    )
    plan = partition(data, "noniid", 2, seed=0)
    assert sorted(plan.sizes().tolist()) == [50, 70]
    by_dept = {d: set(plan.assignments[[i for i, x in enumerate(depts) if x == d]].tolist())
               for d in sizes}
    # every department lands wholly in one partition
    assert all(len(v) == 1 for v in by_dept.values())
    assert by_dept["a"] != by_dept["b"]
    assert by_dept["b"] == by_dept["c"]
    # the last department ties 50 vs 50 and takes the lower partition index
    assert by_dept["d"] == by_dept["a"]


def test_noniid_department_purity_and_anomaly_pinning():
    raw = make_synthetic(1000, seed=16)
    data = inject_anomalies(raw, 5, 5, seed=16)
    plan = partition(data, "noniid", 4, seed=17)
    normal = data.labels == Label.NORMAL
    for dept in set(data.departments[i] for i in range(data.n_records) if normal[i]):
        rows = [
            i
            for i in range(data.n_records)
            if normal[i] and data.departments[i] == dept
        ]
        assert len(set(plan.assignments[rows].tolist())) == 1
    assert np.all(plan.assignments[~normal] == 0)


def test_noniid_needs_enough_departments():
    data = toy_dataset()  # eight departments
    with pytest.raises(PartitionError):
        partition(data, "noniid", 9, seed=0)


def test_partition_rejects_empty_partitions():
    # every record anomalous: all pinned to 0, other partitions starve
    data = toy_dataset(n=6, seed=18)
    data.labels[:] = int(Label.GLOBAL)
    with pytest.raises(PartitionError):
        partition(data, "iid", 3, seed=0)


def test_partition_rejects_bad_mode_and_gamma():
    data = toy_dataset()
    with pytest.raises(PartitionError):
        partition(data, "stratified", 2, seed=0)
    with pytest.raises(PartitionError):
        partition(data, "iid", 0, seed=0)
