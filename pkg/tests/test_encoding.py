"""One-hot / min-max encoding and the on-disk dataset artifact."""

import numpy as np
import pytest

from fedanomaly import (
    ColumnMap,
    ConfigError,
    DataError,
    DatasetSchema,
    Label,
    RawDataset,
    ShapeError,
    TabularEncoder,
    encode_dataset,
    load_dataset,
    partition,
    save_dataset,
)
from fedanomaly.encoding import EncodedDataset

SCHEMA = DatasetSchema(
    categorical=("dept", "acct"), numeric=("amt",), department="dept"
)


def small_raw(values=None, amounts=None, labels=None):
    depts = ["sales", "ops", "sales", "hr"]
    accts = ["a", "b", "a", "c"] if values is None else list(values)
    amt = [10.0, 20.0, 30.0, 20.0] if amounts is None else list(amounts)
    n = len(accts)
    return RawDataset(
        schema=SCHEMA,
        cat_columns=[depts[:n], accts],
        numeric=np.asarray(amt, dtype=np.float64).reshape(-1, 1),
        labels=np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels),
        departments=depts[:n],
    )


def test_vocabulary_first_occurrence_order():
    enc = TabularEncoder().fit(small_raw(values=["b", "a", "b", "c"]))
    assert enc.vocabularies_["acct"] == ("b", "a", "c")
    assert enc.vocabularies_["dept"] == ("sales", "ops", "hr")


def test_one_hot_layout_hand_case():
    raw = small_raw()
    enc = TabularEncoder().fit(raw)
    m = enc.transform(raw)
    cmap = enc.column_map_
    # dept spans 3 columns, acct 3, amt 1
    assert cmap.categorical == (("dept", 0, 3), ("acct", 3, 6))
    assert cmap.numeric == (("amt", 6),)
    assert cmap.width == 7
    # row 0: sales=slot0, acct a=slot0, amt min -> 0
    assert m[0].tolist() == [1, 0, 0, 1, 0, 0, 0.0]
    # row 3: hr=slot2, acct c=slot2, amt 20 -> 0.5
    assert m[3].tolist() == [0, 0, 1, 0, 0, 1, 0.5]


def test_min_max_scaling_hand_case():
    raw = small_raw(amounts=[10.0, 20.0, 30.0, 20.0])
    m = TabularEncoder().fit_transform(raw)
    assert m[:, 6].tolist() == [0.0, 0.5, 1.0, 0.5]


def test_constant_numeric_column_maps_to_zero():
    raw = small_raw(amounts=[7.0, 7.0, 7.0, 7.0])
    m = TabularEncoder().fit_transform(raw)
    assert np.array_equal(m[:, 6], np.zeros(4))


def test_one_hot_row_sums():
    raw = small_raw()
    enc = TabularEncoder().fit(raw)
    m = enc.transform(raw)
    for name, start, stop in enc.column_map_.categorical:
        block = m[:, start:stop]
        assert np.array_equal(block.sum(axis=1), np.ones(4)), name
        assert set(np.unique(block)) <= {0.0, 1.0}


def test_argmax_round_trip():
    raw = small_raw(values=["b", "a", "b", "c"])
    enc = TabularEncoder().fit(raw)
    m = enc.transform(raw)
    for (name, start, stop), column in zip(
        enc.column_map_.categorical, raw.cat_columns
    ):
        vocab = enc.vocabularies_[name]
        decoded = [vocab[j] for j in np.argmax(m[:, start:stop], axis=1)]
        assert decoded == column


def test_unseen_token_rejected():
    enc = TabularEncoder().fit(small_raw())
    bad = small_raw(values=["a", "b", "a", "NEW"])
    with pytest.raises(DataError) as err:
        enc.transform(bad)
    assert "NEW" in str(err.value)


def test_transform_before_fit():
    with pytest.raises(ConfigError):
        TabularEncoder().transform(small_raw())


def test_schema_mismatch_rejected():
    enc = TabularEncoder().fit(small_raw())
    other_schema = DatasetSchema(
        categorical=("dept", "acct"), numeric=("total",), department="dept"
    )
    other = RawDataset(
        schema=other_schema,
        cat_columns=[["sales"], ["a"]],
        numeric=np.ones((1, 1)),
        labels=np.zeros(1, dtype=np.int64),
        departments=["sales"],
    )
    with pytest.raises(ConfigError):
        enc.transform(other)


def test_column_map_validation():
    with pytest.raises(ShapeError):
        ColumnMap(categorical=(("a", 0, 3),), numeric=(), width=2)  # span past end
    with pytest.raises(ShapeError):
        ColumnMap(categorical=(("a", 2, 2),), numeric=(), width=3)  # empty span
    with pytest.raises(ShapeError):
        ColumnMap(categorical=(), numeric=(("x", 5),), width=3)
    cmap = ColumnMap(categorical=(("a", 0, 2),), numeric=(("x", 2),), width=3)
    assert cmap.categorical_widths() == {"a": 2}
    assert ColumnMap.from_dict(cmap.to_dict()) == cmap


def test_encode_dataset_bundles_everything():
    raw = small_raw(labels=[0, 1, 0, 2])
    enc = encode_dataset(raw)
    assert enc.n_records == 4
    assert enc.n_features == enc.column_map.width
    assert np.array_equal(enc.labels, [0, 1, 0, 2])
    assert enc.labels is not raw.labels
    assert enc.schema == SCHEMA


def test_rows_subsetting():
    enc = encode_dataset(small_raw(labels=[0, 1, 0, 2]))
    sub = enc.rows(np.array([3, 0]))
    assert sub.matrix.shape == (2, enc.n_features)
    assert np.array_equal(sub.matrix[0], enc.matrix[3])
    assert sub.labels.tolist() == [2, 0]
    assert sub.column_map is enc.column_map


def test_save_load_round_trip(tmp_path):
    raw = small_raw(labels=[0, 1, 2, 0])
    enc = encode_dataset(raw)
    plan = partition(raw, "iid", 2, seed=0)
    out = save_dataset(tmp_path / "ds", enc, plan=plan)
    back, back_plan, manifest = load_dataset(out)
    assert np.array_equal(back.matrix, enc.matrix)
    assert back.column_map == enc.column_map
    assert back.vocabularies == enc.vocabularies
    assert back.numeric_ranges == enc.numeric_ranges
    assert np.array_equal(back.labels, enc.labels)
    assert back.schema == enc.schema
    assert back_plan is not None
    assert back_plan.gamma == plan.gamma
    assert back_plan.mode == plan.mode
    assert np.array_equal(back_plan.assignments, plan.assignments)
    assert manifest["label_counts"] == {"normal": 2, "global": 1, "local": 1}


def test_save_without_plan(tmp_path):
    enc = encode_dataset(small_raw())
    _, plan, _ = load_dataset(save_dataset(tmp_path / "ds", enc))
    assert plan is None


def test_save_is_byte_identical(tmp_path):
    enc = encode_dataset(small_raw())
    a = save_dataset(tmp_path / "a", enc)
    b = save_dataset(tmp_path / "b", enc)
    assert (a / "matrix.bin").read_bytes() == (b / "matrix.bin").read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()


def test_load_rejects_corrupt_matrix(tmp_path):
    enc = encode_dataset(small_raw())
    out = save_dataset(tmp_path / "ds", enc)
    blob = bytearray((out / "matrix.bin").read_bytes())
    blob[-1] ^= 0xFF
    (out / "matrix.bin").write_bytes(bytes(blob))
    with pytest.raises(ConfigError) as err:
        load_dataset(out)
    assert "checksum" in str(err.value)


def test_load_rejects_truncated_matrix(tmp_path):
    enc = encode_dataset(small_raw())
    out = save_dataset(tmp_path / "ds", enc)
    blob = (out / "matrix.bin").read_bytes()
    (out / "matrix.bin").write_bytes(blob[:-8])
    with pytest.raises(ConfigError):
        load_dataset(out)


def test_load_rejects_wrong_kind_and_version(tmp_path):
    import json

    enc = encode_dataset(small_raw())
    out = save_dataset(tmp_path / "ds", enc)
    manifest = json.loads((out / "manifest.json").read_text())
    manifest["kind"] = "something-else"
    (out / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ConfigError):
        load_dataset(out)
    manifest["kind"] = "encoded-dataset"
    manifest["format_version"] = 99
    (out / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ConfigError):
        load_dataset(out)
    with pytest.raises(ConfigError):
        load_dataset(tmp_path / "nowhere")


def test_encoded_dataset_validation():
    cmap = ColumnMap(categorical=(("a", 0, 2),), numeric=(), width=2)
    with pytest.raises(ShapeError):
        EncodedDataset(
            matrix=np.zeros((2, 3)),
            column_map=cmap,
            vocabularies={"a": ("x", "y")},
            numeric_ranges={},
            labels=np.zeros(2, dtype=np.int64),
            schema=SCHEMA,
        )
    with pytest.raises(ShapeError):
        EncodedDataset(
            matrix=np.zeros((2, 2)),
            column_map=cmap,
            vocabularies={"a": ("x", "y")},
            numeric_ranges={},
            labels=np.zeros(3, dtype=np.int64),
            schema=SCHEMA,
        )


def test_anomaly_tokens_get_fresh_columns():
    # a token occurring once becomes its own indicator column
    raw = small_raw(values=["a", "b", "a", "WEIRD_9"])
    enc = TabularEncoder().fit(raw)
    assert "WEIRD_9" in enc.vocabularies_["acct"]
    m = enc.transform(raw)
    name, start, stop = enc.column_map_.categorical[1]
    j = enc.vocabularies_["acct"].index("WEIRD_9")
    col = m[:, start + j]
    assert col.tolist() == [0, 0, 0, 1]


def test_label_enum_values():
    assert int(Label.NORMAL) == 0
    assert int(Label.GLOBAL) == 1
    assert int(Label.LOCAL) == 2
