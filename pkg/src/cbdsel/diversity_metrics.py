"""Subset diversity scores: pooled concept entropy and geometric log-det.

The concept-based score of a subset is the Shannon entropy (base 2) of the
pooled concept-frequency distribution: each image contributes its top-m
concepts, and with fq(c) the number of images whose assignment contains
concept c,

    p_c = fq(c) / sum_j fq(j)        H = -sum_c p_c * log2(p_c).

``ConceptHistogram`` maintains H incrementally through the decomposition
H = log2(T) - (1/T) * sum_c fq(c)*log2(fq(c)), which makes a tentative
add/remove cost O(m) instead of O(distinct concepts). That constant-cost
update is what keeps greedy selection cheap on large pools.

The geometric baseline scores a subset as logdet(V V^T + eps*I) where V is
the row-unit-normalized feature matrix: the (jittered) log-volume spanned by
the subset. The jitter keeps rank-deficient subsets comparable; without it
the log-determinant of a redundant subset is -inf.
"""

from __future__ import annotations

from math import log2

import numpy as np
import scipy.linalg

from .errors import (
    AccountingError,
    ConfigurationError,
    DegenerateVectorError,
    RankDeficiencyError,
    UndefinedDiversityError,
)

#: Default jitter added to the Gram diagonal in gd_score.
DEFAULT_GD_JITTER = 1e-8


def _concept_indices(assignment) -> np.ndarray:
    concepts = getattr(assignment, "concepts", assignment)
    return np.asarray(concepts, dtype=np.int64).ravel()


class ConceptHistogram:
    """Pooled concept frequencies with an incrementally maintained entropy.

    Mutated only by its owner (not safe for shared mutation); ``copy`` is
    cheap enough for speculative branches. Entropy is exact (0.0) for
    histograms with at most one distinct concept and undefined for empty
    ones.
    """

    __slots__ = ("_counts", "_total", "_sum_flog")

    def __init__(self):
        self._counts: dict[int, int] = {}
        self._total = 0
        self._sum_flog = 0.0  # running sum of fq * log2(fq)

    @property
    def total(self) -> int:
        return self._total

    @property
    def distinct(self) -> int:
        return len(self._counts)

    @property
    def is_empty(self) -> bool:
        return self._total == 0

    def frequencies(self) -> dict[int, int]:
        return dict(self._counts)

    @property
    def entropy_bits(self) -> float:
        if self._total == 0:
            raise UndefinedDiversityError("entropy of an empty histogram is undefined")
        if len(self._counts) <= 1:
            return 0.0
        return log2(self._total) - self._sum_flog / self._total

    def add(self, assignment) -> "ConceptHistogram":
        """Fold one assignment's concepts in; O(m). Returns self."""
        concepts = _concept_indices(assignment)
        counts = self._counts
        delta = 0.0
        for c in concepts.tolist():
            fq = counts.get(c, 0)
            if fq:
                delta += (fq + 1) * log2(fq + 1) - fq * log2(fq)
            counts[c] = fq + 1
        self._sum_flog += delta
        self._total += concepts.size
        return self

    def remove(self, assignment) -> "ConceptHistogram":
        """Inverse of ``add``; every concept must be present with fq >= 1."""
        concepts = _concept_indices(assignment)
        counts = self._counts
        for c in concepts.tolist():
            if counts.get(c, 0) < 1:
                raise AccountingError(
                    f"cannot remove concept {c}: not present in the histogram"
                )
        delta = 0.0
        for c in concepts.tolist():
            fq = counts[c]
            if fq == 1:
                del counts[c]
            else:
                delta += (fq - 1) * log2(fq - 1) - fq * log2(fq)
                counts[c] = fq - 1
        self._sum_flog += delta
        self._total -= concepts.size
        if self._total == 0:
            self._sum_flog = 0.0
        return self

    def copy(self) -> "ConceptHistogram":
        dup = ConceptHistogram()
        dup._counts = dict(self._counts)
        dup._total = self._total
        dup._sum_flog = self._sum_flog
        return dup


def histogram_add(h: ConceptHistogram, assignment) -> ConceptHistogram:
    """In-place incremental add (see ConceptHistogram.add)."""
    return h.add(assignment)


def histogram_remove(h: ConceptHistogram, assignment) -> ConceptHistogram:
    """In-place incremental remove (see ConceptHistogram.remove)."""
    return h.remove(assignment)


def cbd_score(assignments) -> float:
    """Concept-based diversity of a subset, in bits.

    From-scratch evaluation over the pooled concept frequencies of all
    assignments. Permutation-invariant; 0 for a single distinct concept and
    bounded above by log2(distinct pooled concepts).
    """
    assignments = list(assignments)
    if not assignments:
        raise UndefinedDiversityError("diversity of an empty subset is undefined")
    arrays = []
    for a in assignments:
        concepts = _concept_indices(a)
        if concepts.size == 0:
            raise UndefinedDiversityError(
                f"assignment for image {getattr(a, 'image_index', '?')} has no concepts"
            )
        arrays.append(concepts)
    pooled = np.concatenate(arrays)
    freqs = np.unique(pooled, return_counts=True)[1].astype(np.float64)
    if freqs.size <= 1:
        return 0.0
    total = freqs.sum()
    return float(log2(total) - (freqs * np.log2(freqs)).sum() / total)


def gd_score(features, eps: float = DEFAULT_GD_JITTER) -> float:
    """Geometric diversity: logdet of the jittered Gram of normalized rows.

    Row normalization makes the score invariant to per-row positive scaling;
    the Gram form makes it permutation-invariant. With eps = 0 the Gram must
    be strictly positive definite (b linearly independent rows), otherwise a
    RankDeficiencyError is raised.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 1:
        raise ConfigurationError(
            f"features must be a non-empty matrix, got shape {feats.shape}"
        )
    if eps < 0:
        raise ConfigurationError(f"eps must be >= 0, got {eps}")
    norms = np.linalg.norm(feats, axis=1)
    zero = norms == 0.0
    if zero.any():
        row = int(np.flatnonzero(zero)[0])
        raise DegenerateVectorError(f"feature row {row} has zero norm")
    unit = feats / norms[:, None]
    gram = unit @ unit.T
    if eps > 0:
        gram[np.diag_indices_from(gram)] += eps
    try:
        chol = scipy.linalg.cholesky(gram, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise RankDeficiencyError(
            "Gram matrix is numerically singular; rerun with a positive eps"
        ) from exc
    return float(2.0 * np.log(np.diag(chol)).sum())
