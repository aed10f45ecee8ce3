"""Seeded synthetic fixtures shared by the test suite, benchmarks and demos.

The cluster world places labeled points around cluster centers that are
themselves built from disjoint groups of concept vectors, so each class has
a known set of dominant concepts. Growing the class coverage of a subset
then provably grows both its concept spread and its geometric spread, which
is exactly the controlled setting the correlation analysis needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .concept_space import ConceptAssignment
from .embstore import ConceptSpace, LabelVector


@dataclass(frozen=True)
class ClusterWorld:
    points: np.ndarray
    labels: LabelVector
    knb: ConceptSpace
    cluster_concepts: np.ndarray


def make_cluster_world(
    n_points: int = 5000,
    n_clusters: int = 10,
    dim: int = 64,
    n_concepts: int = 40,
    concepts_per_cluster: int = 4,
    noise: float = 0.25,
    seed: int = 0,
) -> ClusterWorld:
    """Gaussian clusters whose centers sit on disjoint concept groups."""
    if n_clusters * concepts_per_cluster > n_concepts:
        raise ValueError("not enough concepts to give every cluster a disjoint group")
    rng = np.random.default_rng(seed)

    concepts = rng.normal(size=(n_concepts, dim))
    concepts /= np.linalg.norm(concepts, axis=1, keepdims=True)
    names = tuple(f"concept_{i:03d}" for i in range(n_concepts))

    cluster_concepts = np.arange(n_clusters * concepts_per_cluster).reshape(
        n_clusters, concepts_per_cluster
    )
    centers = concepts[cluster_concepts].mean(axis=1)
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    labels = np.arange(n_points) % n_clusters
    points = centers[labels] + noise * rng.normal(size=(n_points, dim))

    return ClusterWorld(
        points=points.astype(np.float32),
        labels=LabelVector(values=labels, num_classes=n_clusters),
        knb=ConceptSpace(names=names, embeddings=concepts.astype(np.float32)),
        cluster_concepts=cluster_concepts,
    )


def make_selection_pool(
    n: int = 50_000,
    n_concepts: int = 2000,
    m: int = 10,
    n_classes: int = 1000,
    seed: int = 0,
) -> tuple[np.ndarray, list[ConceptAssignment]]:
    """A large pool for selection benchmarks: softmax rows plus assignments.

    Each candidate's concepts form a window of ``m`` consecutive ids, which
    keeps them distinct per candidate while leaving plenty of overlap across
    candidates for the diversity gate to reject.
    """
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(n, n_classes))
    logits -= logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    probs = (logits / logits.sum(axis=1, keepdims=True)).astype(np.float32)
    # float32 rounding can leave rows a hair off; renormalize in float32
    probs /= probs.sum(axis=1, keepdims=True)

    starts = rng.integers(0, n_concepts - m + 1, size=n)
    windows = starts[:, None] + np.arange(m)[None, :]
    fake_scores = 0.9 - 0.01 * np.arange(m)
    assignments = [
        ConceptAssignment(
            image_index=i, concepts=windows[i].astype(np.int64), scores=fake_scores
        )
        for i in range(n)
    ]
    return probs, assignments
