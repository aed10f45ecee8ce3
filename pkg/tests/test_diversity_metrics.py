"""Concept entropy (from-scratch and incremental) and geometric diversity."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbdsel.diversity_metrics import (
    ConceptHistogram,
    cbd_score,
    gd_score,
    histogram_add,
    histogram_remove,
)
from cbdsel.errors import (
    AccountingError,
    ConfigurationError,
    DegenerateVectorError,
    RankDeficiencyError,
    UndefinedDiversityError,
)
from oracles import entropy_from_scratch, lu_logdet


def test_single_concept_is_zero():
    assert cbd_score([[7], [7], [7]]) == 0.0


def test_uniform_four_concepts():
    assert cbd_score([[0], [1], [2], [3]]) == pytest.approx(2.0, abs=1e-12)


def test_skewed_three_concepts():
    # frequencies {a:2, b:1, c:1} -> 0.5*1 + 0.25*2 + 0.25*2 = 1.5 bits
    assert cbd_score([[0, 1], [0, 2]]) == pytest.approx(1.5, abs=1e-12)


def test_empty_subset_is_undefined():
    with pytest.raises(UndefinedDiversityError):
        cbd_score([])


def test_empty_assignment_is_undefined():
    with pytest.raises(UndefinedDiversityError):
        cbd_score([[1], []])


def test_permutation_invariance():
    rng = np.random.default_rng(0)
    assignments = [rng.integers(0, 20, size=5).tolist() for _ in range(30)]
    base = cbd_score(assignments)
    rng.shuffle(assignments)
    assert cbd_score(assignments) == pytest.approx(base, abs=1e-12)


def test_entropy_upper_bound():
    rng = np.random.default_rng(1)
    for _ in range(20):
        assignments = [
            rng.choice(16, size=4, replace=False).tolist() for _ in range(10)
        ]
        pooled_distinct = len({c for a in assignments for c in a})
        assert 0.0 <= cbd_score(assignments) <= math.log2(pooled_distinct) + 1e-12


def test_uniformity_maximizes_entropy():
    # among histograms with fixed distinct count and total, uniform wins
    rng = np.random.default_rng(2)
    k, total = 8, 40
    uniform = []
    for c in range(k):
        uniform.extend([[c]] * (total // k))
    h_uniform = cbd_score(uniform)
    for _ in range(50):
        counts = rng.multinomial(total - k, np.ones(k) / k) + 1
        if np.all(counts == total // k):
            continue
        skewed = []
        for c, fq in enumerate(counts):
            skewed.extend([[c]] * int(fq))
        assert cbd_score(skewed) < h_uniform + 1e-12


def test_histogram_base_case_matches_cbd():
    h = ConceptHistogram()
    histogram_add(h, [3, 5, 9])
    assert h.entropy_bits == pytest.approx(cbd_score([[3, 5, 9]]), abs=1e-12)


def test_histogram_tracks_from_scratch():
    rng = np.random.default_rng(3)
    h = ConceptHistogram()
    pool = []
    for _ in range(200):
        a = rng.choice(30, size=6, replace=False).tolist()
        pool.append(a)
        histogram_add(h, a)
        assert h.entropy_bits == pytest.approx(entropy_from_scratch(pool), abs=1e-9)


def test_histogram_add_remove_restores():
    h = ConceptHistogram()
    histogram_add(h, [1, 2, 3])
    histogram_add(h, [2, 3, 4])
    before_counts = h.frequencies()
    before_h = h.entropy_bits
    histogram_add(h, [4, 5, 6])
    histogram_remove(h, [4, 5, 6])
    assert h.frequencies() == before_counts
    assert h.entropy_bits == pytest.approx(before_h, abs=1e-12)


def test_histogram_remove_to_empty_sets_flag():
    h = ConceptHistogram()
    histogram_add(h, [1, 2])
    histogram_remove(h, [1, 2])
    assert h.is_empty
    with pytest.raises(UndefinedDiversityError):
        h.entropy_bits


def test_histogram_remove_absent_concept():
    h = ConceptHistogram()
    histogram_add(h, [1])
    with pytest.raises(AccountingError, match="concept 9"):
        histogram_remove(h, [9])
    # failed removal must not corrupt the histogram
    assert h.frequencies() == {1: 1}


def test_histogram_fuzz_against_oracle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        h = ConceptHistogram()
        live = []
        for _ in range(rng.integers(1, 60)):
            if live and rng.random() < 0.35:
                idx = int(rng.integers(0, len(live)))
                histogram_remove(h, live.pop(idx))
            else:
                a = rng.choice(24, size=int(rng.integers(1, 8)), replace=False).tolist()
                live.append(a)
                histogram_add(h, a)
            if live:
                assert h.entropy_bits == pytest.approx(
                    entropy_from_scratch(live), abs=1e-9
                )
            else:
                assert h.is_empty


def test_histogram_copy_is_independent():
    h = ConceptHistogram()
    histogram_add(h, [1, 2])
    dup = h.copy()
    histogram_add(dup, [3, 4])
    assert h.frequencies() == {1: 1, 2: 1}
    assert dup.frequencies() == {1: 1, 2: 1, 3: 1, 4: 1}


def test_histogram_single_concept_exact_zero():
    h = ConceptHistogram()
    for _ in range(7):
        histogram_add(h, [13])
    assert h.entropy_bits == 0.0


def test_gd_orthonormal_rows():
    assert gd_score(np.eye(6), eps=0.0) == pytest.approx(0.0, abs=1e-12)


def test_gd_identical_rows_closed_form():
    eps = 1e-8
    rows = np.array([[1.0, 0.0], [1.0, 0.0]])
    expected = math.log(2 * eps + eps**2)
    assert gd_score(rows, eps=eps) == pytest.approx(expected, rel=1e-6)


def test_gd_matches_lu_oracle():
    rng = np.random.default_rng(5)
    eps = 1e-8
    for _ in range(25):
        b, d = rng.integers(2, 9), rng.integers(2, 17)
        feats = rng.normal(size=(b, d))
        unit = feats / np.linalg.norm(feats, axis=1, keepdims=True)
        gram = unit @ unit.T + eps * np.eye(b)
        expected = lu_logdet(gram)
        assert gd_score(feats, eps=eps) == pytest.approx(expected, rel=1e-6)


def test_gd_row_permutation_invariance():
    rng = np.random.default_rng(6)
    feats = rng.normal(size=(10, 5))
    base = gd_score(feats)
    shuffled = feats[rng.permutation(10)]
    assert gd_score(shuffled) == pytest.approx(base, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(min_value=0.01, max_value=50.0), seed=st.integers(0, 500))
def test_gd_row_scale_invariance(scale, seed):
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(6, 4))
    scaled = feats.copy()
    scaled[2] *= scale
    assert gd_score(scaled) == pytest.approx(gd_score(feats), rel=1e-9)


def test_gd_zero_norm_row():
    feats = np.array([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(DegenerateVectorError, match="row 1"):
        gd_score(feats)


def test_gd_rank_deficient_at_zero_eps():
    rows = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(RankDeficiencyError, match="positive eps"):
        gd_score(rows, eps=0.0)


def test_gd_negative_eps_rejected():
    with pytest.raises(ConfigurationError):
        gd_score(np.eye(2), eps=-1e-9)
