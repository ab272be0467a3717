import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zslens.data import (
    Dataset,
    FEATURES_MAGIC,
    generate_synthetic,
    load_dataset,
    load_split_config,
    make_split,
    save_dataset,
    standardize_signatures,
)
from zslens.errors import DataFormatError


def small_dataset(seed=0):
    return generate_synthetic(
        C_seen=4, C_unseen=2, a=3, d=6, per_class=5, noise_sigma=0.1, seed=seed
    )


# -- Dataset validation -------------------------------------------------------


def test_dataset_rejects_label_out_of_range():
    with pytest.raises(ValueError, match="valid class"):
        Dataset(
            features=np.zeros((2, 2)),
            labels=np.array([0, 5]),
            class_names=("a", "b"),
            raw_attributes=np.ones((2, 2)),
            attribute_names=("p", "q"),
        )


def test_dataset_rejects_nonfinite_features():
    with pytest.raises(ValueError, match="non-finite"):
        Dataset(
            features=np.array([[np.nan, 0.0]]),
            labels=np.array([0]),
            class_names=("a", "b"),
            raw_attributes=np.ones((2, 2)),
            attribute_names=("p", "q"),
        )


def test_dataset_rejects_duplicate_names():
    with pytest.raises(ValueError, match="duplicate"):
        Dataset(
            features=np.zeros((1, 2)),
            labels=np.array([0]),
            class_names=("a", "a"),
            raw_attributes=np.ones((2, 2)),
            attribute_names=("p", "q"),
        )


def test_dataset_arrays_are_read_only():
    ds = small_dataset()
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0
    with pytest.raises(ValueError):
        ds.labels[0] = 1


def test_dataset_does_not_freeze_caller_arrays():
    features = np.zeros((2, 2), dtype=np.float32)
    labels = np.array([0, 1], dtype=np.int64)
    Dataset(features, labels, ("a", "b"), np.ones((2, 2)), ("p", "q"))
    features[0, 0] = 3.0
    labels[0] = 1


# -- standardize_signatures ----------------------------------------------------


def test_standardize_two_point_column():
    sig = standardize_signatures(np.array([[1.0], [3.0]]))
    assert np.allclose(sig.signatures, [[-1.0], [1.0]])
    assert sig.means[0] == 2.0 and sig.stddevs[0] == 1.0


def test_standardize_constant_column_zeroed_and_flagged():
    raw = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]])
    with pytest.warns(UserWarning, match="constant"):
        sig = standardize_signatures(raw)
    assert np.all(sig.signatures[:, 0] == 0.0)
    assert sig.constant_columns.tolist() == [True, False]
    # (raw - mean) / stddev stays exact for the constant column too
    assert np.all((raw - sig.means) / sig.stddevs * ~sig.constant_columns
                  == sig.signatures)


def test_standardize_column_stats():
    rng = np.random.default_rng(3)
    sig = standardize_signatures(rng.normal(2.0, 5.0, size=(40, 7)))
    assert np.all(np.abs(sig.signatures.mean(axis=0)) <= 1e-9)
    assert np.all(np.abs(sig.signatures.std(axis=0) - 1.0) <= 1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.integers(1, 6))
def test_standardize_idempotent(seed, C, a):
    raw = np.random.default_rng(seed).normal(size=(C, a))
    once = standardize_signatures(raw).signatures
    twice = standardize_signatures(once).signatures
    assert np.max(np.abs(twice - once)) <= 1e-12


def test_standardize_rejects_single_row():
    with pytest.raises(ValueError):
        standardize_signatures(np.ones((1, 3)))


# -- make_split ----------------------------------------------------------------


def test_split_stratified_counts():
    ds = generate_synthetic(C_seen=2, C_unseen=1, a=2, d=4, per_class=100,
                            noise_sigma=0.1, seed=1)
    split = make_split(ds, ["unseen_00"], diag_fraction=0.2, seed=0)
    for y in split.seen_classes:
        diag_labels = ds.labels[split.diag_instances]
        assert (diag_labels == y).sum() == 20
        train_labels = ds.labels[split.train_instances]
        assert (train_labels == y).sum() == 80


def test_split_deterministic():
    ds = small_dataset()
    a = make_split(ds, ["unseen_00"], 0.3, seed=5)
    b = make_split(ds, ["unseen_00"], 0.3, seed=5)
    assert a.seen_classes == b.seen_classes
    assert np.array_equal(a.train_instances, b.train_instances)
    assert np.array_equal(a.diag_instances, b.diag_instances)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_split_partition_laws(seed):
    ds = small_dataset()
    split = make_split(ds, ["unseen_00", "unseen_01"], 0.25, seed=seed)
    assert not set(split.seen_classes) & set(split.unseen_classes)
    assert sorted(split.seen_classes + split.unseen_classes) == list(range(ds.n_classes))
    assert np.intersect1d(split.train_instances, split.diag_instances).size == 0
    train_labels = set(ds.labels[split.train_instances].tolist())
    diag_labels = set(ds.labels[split.diag_instances].tolist())
    assert train_labels == set(split.seen_classes)  # every seen class trains
    assert diag_labels <= set(split.seen_classes)


def test_split_all_unseen_rejected():
    ds = small_dataset()
    with pytest.raises(ValueError):
        make_split(ds, list(ds.class_names), 0.2, seed=0)


def test_split_unknown_class_rejected():
    ds = small_dataset()
    with pytest.raises(ValueError, match="unknown class"):
        make_split(ds, ["never_heard_of_it"], 0.2, seed=0)


def test_split_rejects_singleton_seen_class():
    ds = Dataset(
        features=np.random.default_rng(0).normal(size=(3, 2)),
        labels=np.array([0, 1, 1]),
        class_names=("a", "b", "c"),
        raw_attributes=np.random.default_rng(1).normal(size=(3, 2)),
        attribute_names=("p", "q"),
    )
    with pytest.raises(ValueError, match="at least 2"):
        make_split(ds, ["c"], 0.2, seed=0)


def test_split_diag_fraction_bounds():
    ds = small_dataset()
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            make_split(ds, ["unseen_00"], bad, seed=0)


# -- generate_synthetic ----------------------------------------------------------


def test_synthetic_zero_noise_collapses_classes():
    ds = generate_synthetic(C_seen=3, C_unseen=1, a=2, d=4, per_class=4,
                            noise_sigma=0.0, seed=2)
    for y in range(ds.n_classes):
        rows = ds.features[ds.labels == y]
        assert np.all(rows == rows[0])


def test_synthetic_deterministic():
    a = generate_synthetic(3, 1, 2, 4, 4, 0.3, seed=9)
    b = generate_synthetic(3, 1, 2, 4, 4, 0.3, seed=9)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.raw_attributes, b.raw_attributes)


def test_synthetic_corrupt_channel_carries_no_class_signal():
    # Regressing features on the class signatures recovers the lift column
    # by column, except the corrupted one, which regresses to noise.
    k = 2
    clean = generate_synthetic(8, 2, 4, 16, 100, 0.1, seed=5)
    corrupt = generate_synthetic(8, 2, 4, 16, 100, 0.1, corrupt_attribute=k, seed=5)
    Z = clean.raw_attributes[clean.labels]
    A_clean, *_ = np.linalg.lstsq(Z, clean.features.astype(np.float64), rcond=None)
    A_corr, *_ = np.linalg.lstsq(Z, corrupt.features.astype(np.float64), rcond=None)
    norms_clean = np.linalg.norm(A_clean, axis=1)
    norms_corr = np.linalg.norm(A_corr, axis=1)
    assert norms_corr[k] < 0.2 * norms_clean[k]
    for j in range(4):
        if j != k:
            assert abs(norms_corr[j] - norms_clean[j]) < 0.2 * norms_clean[j]


def test_synthetic_rejects_bad_dimensions():
    with pytest.raises(ValueError):
        generate_synthetic(2, 1, 5, 3, 4, 0.1, seed=0)  # d < a
    with pytest.raises(ValueError):
        generate_synthetic(2, 1, 2, 4, 1, 0.1, seed=0)  # per_class < 2
    with pytest.raises(ValueError):
        generate_synthetic(2, 1, 2, 4, 4, 0.1, corrupt_attribute=2, seed=0)
    with pytest.raises(ValueError):
        generate_synthetic(2, 1, 2, 4, 4, -0.5, seed=0)


# -- save / load round trip ------------------------------------------------------


def test_round_trip_exact(tmp_path):
    ds = small_dataset(seed=13)
    save_dataset(ds, tmp_path, split_info={"unseen": ["unseen_00"], "diag_fraction": 0.2, "seed": 3})
    back = load_dataset(tmp_path)
    assert np.array_equal(back.features, ds.features)  # bit-exact float32
    assert np.array_equal(back.labels, ds.labels)
    assert back.class_names == ds.class_names
    assert back.attribute_names == ds.attribute_names
    assert np.max(np.abs(back.raw_attributes - ds.raw_attributes)) <= 1e-12
    cfg = load_split_config(tmp_path)
    assert cfg == {"unseen": ["unseen_00"], "diag_fraction": 0.2, "seed": 3}


def test_load_missing_directory():
    with pytest.raises(DataFormatError, match="not a directory"):
        load_dataset("/nonexistent/zslens-test")


def test_load_empty_directory(tmp_path):
    with pytest.raises(DataFormatError, match="missing file"):
        load_dataset(tmp_path)


def _written(tmp_path, seed=21):
    ds = small_dataset(seed=seed)
    save_dataset(ds, tmp_path)
    return ds


def test_load_rejects_bad_magic(tmp_path):
    _written(tmp_path)
    blob = (tmp_path / "features.bin").read_bytes()
    (tmp_path / "features.bin").write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(DataFormatError, match="magic"):
        load_dataset(tmp_path)


def test_load_rejects_bad_version(tmp_path):
    _written(tmp_path)
    path = tmp_path / "features.bin"
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", 9)
    path.write_bytes(bytes(blob))
    with pytest.raises(DataFormatError, match="version"):
        load_dataset(tmp_path)


def test_load_rejects_truncated_features(tmp_path):
    _written(tmp_path)
    path = tmp_path / "features.bin"
    path.write_bytes(path.read_bytes()[:-7])
    with pytest.raises(DataFormatError, match="expected"):
        load_dataset(tmp_path)


def test_load_rejects_nonfinite_feature(tmp_path):
    _written(tmp_path)
    path = tmp_path / "features.bin"
    blob = bytearray(path.read_bytes())
    blob[16:20] = struct.pack("<f", float("inf"))
    path.write_bytes(bytes(blob))
    with pytest.raises(DataFormatError, match="non-finite"):
        load_dataset(tmp_path)


def test_load_rejects_unknown_label_class(tmp_path):
    _written(tmp_path)
    path = tmp_path / "labels.csv"
    lines = path.read_text().splitlines()
    lines[1] = lines[1].rsplit(",", 1)[0] + ",martian"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataFormatError, match="unknown class"):
        load_dataset(tmp_path)


def test_load_rejects_duplicate_instance(tmp_path):
    _written(tmp_path)
    path = tmp_path / "labels.csv"
    lines = path.read_text().splitlines()
    lines[2] = lines[1]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataFormatError, match="duplicate"):
        load_dataset(tmp_path)


def test_load_rejects_missing_label_rows(tmp_path):
    _written(tmp_path)
    path = tmp_path / "labels.csv"
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DataFormatError, match="label rows"):
        load_dataset(tmp_path)


def test_load_rejects_bad_label_header(tmp_path):
    _written(tmp_path)
    path = tmp_path / "labels.csv"
    lines = path.read_text().splitlines()
    lines[0] = "idx,klass"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataFormatError, match="header"):
        load_dataset(tmp_path)


def test_load_rejects_nonnumeric_attribute(tmp_path):
    _written(tmp_path)
    path = tmp_path / "attributes.csv"
    lines = path.read_text().splitlines()
    parts = lines[1].split(",")
    parts[1] = "soft"
    lines[1] = ",".join(parts)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataFormatError, match="non-numeric"):
        load_dataset(tmp_path)


def test_load_rejects_ragged_attribute_row(tmp_path):
    _written(tmp_path)
    path = tmp_path / "attributes.csv"
    lines = path.read_text().splitlines()
    lines[1] += ",0.5"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DataFormatError, match="columns"):
        load_dataset(tmp_path)


def test_load_split_config_absent(tmp_path):
    _written(tmp_path)
    assert load_split_config(tmp_path) is None


def test_load_split_config_invalid_json(tmp_path):
    _written(tmp_path)
    (tmp_path / "split.json").write_text("{nope")
    with pytest.raises(DataFormatError, match="JSON"):
        load_split_config(tmp_path)


def test_load_split_config_missing_unseen(tmp_path):
    _written(tmp_path)
    (tmp_path / "split.json").write_text(json.dumps({"diag_fraction": 0.2}))
    with pytest.raises(DataFormatError, match="unseen"):
        load_split_config(tmp_path)
