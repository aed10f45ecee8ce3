"""Persistence round-trips and format validation."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbdsel.embstore import (
    LabelVector,
    load_concept_names,
    load_concepts,
    load_labels,
    load_matrix,
    save_concept_names,
    save_labels,
    save_matrix,
)
from cbdsel.errors import (
    AlignmentError,
    FormatError,
    InvariantError,
    PersistenceError,
)


def test_round_trip_known_bytes(tmp_path):
    path = tmp_path / "m.ebin"
    m = np.array([[1, 2, 3], [4, 5, 6]], dtype=np.float32)
    save_matrix(m, path)
    blob = path.read_bytes()
    assert len(blob) == 12 + 24  # 12-byte header + 6 binary32 values
    assert blob[:4] == b"EMB1"
    assert struct.unpack("<II", blob[4:12]) == (2, 3)
    # little-endian float32 payload, row-major
    assert struct.unpack("<6f", blob[12:]) == (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    loaded = load_matrix(path)
    assert loaded.dtype == np.float32
    assert np.array_equal(loaded, m)


def test_empty_matrix_round_trip(tmp_path):
    path = tmp_path / "empty.ebin"
    save_matrix(np.empty((0, 5), dtype=np.float32), path)
    assert len(path.read_bytes()) == 12
    loaded = load_matrix(path)
    assert loaded.shape == (0, 5)


def test_nan_rejected_before_write(tmp_path):
    path = tmp_path / "bad.ebin"
    m = np.array([[1.0, np.nan]], dtype=np.float32)
    with pytest.raises(InvariantError, match="non-finite"):
        save_matrix(m, path)
    assert not path.exists()


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(min_value=0, max_value=12),
    d=st.integers(min_value=1, max_value=9),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_round_trip_is_bit_exact(tmp_path_factory, n, d, seed):
    rng = np.random.default_rng(seed)
    m = (rng.normal(size=(n, d)) * 10.0 ** rng.integers(-3, 4)).astype(np.float32)
    path = tmp_path_factory.mktemp("rt") / "m.ebin"
    save_matrix(m, path)
    loaded = load_matrix(path)
    assert loaded.tobytes() == m.tobytes()


def test_wrong_magic(tmp_path):
    path = tmp_path / "m.ebin"
    path.write_bytes(b"XXX1" + struct.pack("<II", 1, 1) + struct.pack("<f", 1.0))
    with pytest.raises(FormatError, match="byte offset 0"):
        load_matrix(path)


def test_truncated_payload_names_offset(tmp_path):
    path = tmp_path / "m.ebin"
    path.write_bytes(b"EMB1" + struct.pack("<II", 2, 3) + b"\x00" * 20)
    with pytest.raises(FormatError, match="expected 24 payload bytes at byte offset 12"):
        load_matrix(path)


def test_truncated_header(tmp_path):
    path = tmp_path / "m.ebin"
    path.write_bytes(b"EMB1\x01")
    with pytest.raises(FormatError, match="header"):
        load_matrix(path)


def test_non_finite_payload_rejected_with_offset(tmp_path):
    path = tmp_path / "m.ebin"
    payload = struct.pack("<4f", 1.0, float("inf"), 3.0, 4.0)
    path.write_bytes(b"EMB1" + struct.pack("<II", 2, 2) + payload)
    with pytest.raises(FormatError, match="byte offset 16"):
        load_matrix(path)


def test_probability_row_sum_enforced(tmp_path):
    path = tmp_path / "p.prb"
    payload = struct.pack("<4f", 0.6, 0.6, 0.5, 0.5)
    path.write_bytes(b"PRB1" + struct.pack("<II", 2, 2) + payload)
    with pytest.raises(FormatError, match="row 0 sums to"):
        load_matrix(path, "PRB1")


def test_probability_entry_range_enforced(tmp_path):
    path = tmp_path / "p.prb"
    with pytest.raises(InvariantError, match=r"outside \[0, 1\]"):
        save_matrix(np.array([[1.2, -0.2]], dtype=np.float32), path, "PRB1")


def test_probability_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    probs = rng.dirichlet(np.ones(7), size=20).astype(np.float32)
    probs /= probs.sum(axis=1, keepdims=True)
    path = tmp_path / "p.prb"
    save_matrix(probs, path, "PRB1")
    assert np.array_equal(load_matrix(path, "PRB1"), probs)


def test_kind_mismatch_between_files(tmp_path):
    path = tmp_path / "m.ebin"
    save_matrix(np.ones((1, 2), dtype=np.float32), path)
    with pytest.raises(FormatError, match="expected 'PRB1'"):
        load_matrix(path, "PRB1")


def test_labels_round_trip(tmp_path):
    labels = LabelVector(values=np.array([0, 3, 1, 2]), num_classes=4)
    path = tmp_path / "l.lbl"
    save_labels(labels, path)
    loaded = load_labels(path)
    assert loaded.num_classes == 4
    assert np.array_equal(loaded.values, labels.values)


def test_labels_out_of_range_rejected(tmp_path):
    path = tmp_path / "l.lbl"
    path.write_bytes(b"LBL1" + struct.pack("<II", 2, 2) + struct.pack("<II", 0, 5))
    with pytest.raises(FormatError, match=r"\[0, 2\)"):
        load_labels(path)


def test_label_vector_invariant():
    with pytest.raises(InvariantError):
        LabelVector(values=np.array([0, 2]), num_classes=2)


def test_concept_names_round_trip(tmp_path):
    names = ("zebra", "tree frog", "café au lait")
    path = tmp_path / "names.txt"
    save_concept_names(names, path)
    assert path.read_bytes().endswith(b"\n")
    assert load_concept_names(path) == names


def test_concept_names_no_trailing_newline(tmp_path):
    path = tmp_path / "names.txt"
    path.write_bytes("alpha\nbeta".encode("utf-8"))
    assert load_concept_names(path) == ("alpha", "beta")


def test_load_concepts_aligned(tmp_path):
    names_path = tmp_path / "names.txt"
    emb_path = tmp_path / "emb.ebin"
    save_concept_names(["a", "b", "c"], names_path)
    save_matrix(np.ones((3, 4), dtype=np.float32), emb_path)
    space = load_concepts(names_path, emb_path)
    assert len(space) == 3 and space.dim == 4


def test_load_concepts_count_mismatch(tmp_path):
    names_path = tmp_path / "names.txt"
    emb_path = tmp_path / "emb.ebin"
    save_concept_names(["a", "b", "c"], names_path)
    save_matrix(np.ones((2, 4), dtype=np.float32), emb_path)
    with pytest.raises(AlignmentError, match="3 concepts but .* 2 embedding rows"):
        load_concepts(names_path, emb_path)


def test_load_concepts_accepts_duplicates(tmp_path):
    names_path = tmp_path / "names.txt"
    emb_path = tmp_path / "emb.ebin"
    save_concept_names(["a", "a"], names_path)
    save_matrix(np.ones((2, 4), dtype=np.float32), emb_path)
    space = load_concepts(names_path, emb_path)
    assert space.names == ("a", "a")


def test_missing_file_is_persistence_error(tmp_path):
    with pytest.raises(PersistenceError):
        load_matrix(tmp_path / "nope.ebin")
