"""Hybrid input selection: uncertainty ranking gated by concept diversity.

The main selector ranks the pool by uncertainty, seeds the subset with the
top tenth of the budget unconditionally, then walks the remaining candidates
in rank order and keeps each one only if it strictly increases the pooled
concept entropy of the running subset. Each candidate is examined once. If
the pool is exhausted before the budget is met (a redundancy-saturated
pool), the highest-uncertainty rejected candidates are appended until the
subset reaches the budget; the fill count is reported so experiments can
detect saturation.

Two baselines are provided for comparison: plain top-b by uncertainty and a
seeded uniform random draw. All selectors break ties by ascending candidate
index and are fully deterministic. Selection is inherently sequential (each
decision depends on the running histogram), so it is single-threaded by
contract; uncertainty scores and concept assignments are expected to be
precomputed upstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import log2

import numpy as np

from .errors import BudgetError, ShapeError, UndefinedDiversityError
from .uncertainty_metrics import UncertaintyVector


@dataclass(frozen=True)
class SelectionStep:
    """One examined candidate: entropy before/after the tentative add."""

    candidate: int
    phase: str  # "seed" | "greedy" | "fill"
    accepted: bool
    cbd_before: float | None
    cbd_after: float


@dataclass(frozen=True)
class SelectionResult:
    """Ordered selection plus per-step diagnostics and provenance.

    ``b_init`` is the number of candidates taken unconditionally by rank
    before the diversity gate applied (for the plain uncertainty selector
    this is the whole budget; for the random baseline it is zero).
    """

    selected: np.ndarray
    b_init: int
    fill_count: int
    steps: tuple[SelectionStep, ...]
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.selected.size)

    def to_dict(self) -> dict:
        return {
            "selected": [int(i) for i in self.selected],
            "b_init": self.b_init,
            "fill_count": self.fill_count,
            "provenance": self.provenance,
            "steps": [
                {
                    "candidate": s.candidate,
                    "phase": s.phase,
                    "accepted": s.accepted,
                    "cbd_before": s.cbd_before,
                    "cbd_after": s.cbd_after,
                }
                for s in self.steps
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _ranked_indices(uncertainty: UncertaintyVector) -> np.ndarray:
    # stable sort of the negated scores: descending score, ties by index
    return np.argsort(-uncertainty.scores, kind="stable")


def _check_budget(b: int, n: int) -> None:
    if b < 1:
        raise BudgetError(f"budget must be positive, got {b}")
    if b > n:
        raise BudgetError(f"budget {b} exceeds pool size {n}")


def select_cbd(
    assignments,
    uncertainty: UncertaintyVector,
    b: int,
    provenance: dict | None = None,
) -> SelectionResult:
    """Greedy diversity-gated selection over an uncertainty ranking.

    ``assignments`` holds each candidate's concept assignment, aligned by
    index with ``uncertainty``. Acceptance requires a strict entropy
    increase, so candidates adding only already-frequent concepts are
    skipped as redundant. Deterministic given its inputs.
    """
    assignments = list(assignments)
    n = len(assignments)
    if len(uncertainty) != n:
        raise ShapeError(
            f"{n} assignments but {len(uncertainty)} uncertainty scores"
        )
    _check_budget(b, n)

    concept_rows = []
    for a in assignments:
        row = np.asarray(getattr(a, "concepts", a), dtype=np.int64).ravel()
        if row.size == 0:
            raise UndefinedDiversityError(
                f"assignment for image {getattr(a, 'image_index', '?')} has no concepts"
            )
        concept_rows.append(row)
    lengths = {row.size for row in concept_rows}
    uniform = len(lengths) == 1
    if uniform:
        concept_matrix = np.vstack(concept_rows)
        capacity = int(concept_matrix.max()) + 1
        max_total = concept_matrix.size
    else:
        concept_matrix = None
        capacity = int(max(row.max() for row in concept_rows)) + 1
        max_total = sum(row.size for row in concept_rows)

    # fq * log2(fq) lookup table; index 0 and 1 are exactly zero
    values = np.arange(max_total + 2, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        xlogx = values * np.log2(values)
    xlogx[0] = 0.0

    counts = np.zeros(capacity, dtype=np.int64)
    total = 0
    sum_flog = 0.0
    distinct = 0
    entropy: float | None = None  # None while the histogram is empty

    order = _ranked_indices(uncertainty)
    b_init = max(1, b // 10)

    steps: list[SelectionStep] = []
    selected: list[int] = []
    rejected: list[int] = []

    def _tentative(row: np.ndarray) -> tuple[float, float, int]:
        """Entropy after adding ``row``, without mutating the state."""
        fq = counts[row]
        delta = float((xlogx[fq + 1] - xlogx[fq]).sum())
        new_total = total + row.size
        new_distinct = distinct + int((fq == 0).sum())
        if new_distinct <= 1:
            return 0.0, delta, new_distinct
        return log2(new_total) - (sum_flog + delta) / new_total, delta, new_distinct

    def _commit(row: np.ndarray, new_entropy: float, delta: float, new_distinct: int):
        nonlocal total, sum_flog, distinct, entropy
        counts[row] += 1
        total += row.size
        sum_flog += delta
        distinct = new_distinct
        entropy = new_entropy

    def _row(candidate: int) -> np.ndarray:
        return concept_matrix[candidate] if uniform else concept_rows[candidate]

    pos = 0
    while pos < b_init:
        cand = int(order[pos])
        row = _row(cand)
        new_entropy, delta, new_distinct = _tentative(row)
        steps.append(SelectionStep(cand, "seed", True, entropy, new_entropy))
        _commit(row, new_entropy, delta, new_distinct)
        selected.append(cand)
        pos += 1

    while pos < n and len(selected) < b:
        cand = int(order[pos])
        row = _row(cand)
        new_entropy, delta, new_distinct = _tentative(row)
        if new_entropy > entropy:
            steps.append(SelectionStep(cand, "greedy", True, entropy, new_entropy))
            _commit(row, new_entropy, delta, new_distinct)
            selected.append(cand)
        else:
            steps.append(SelectionStep(cand, "greedy", False, entropy, new_entropy))
            rejected.append(cand)
        pos += 1

    fill_count = 0
    if len(selected) < b:
        for cand in rejected:
            if len(selected) == b:
                break
            row = _row(cand)
            new_entropy, delta, new_distinct = _tentative(row)
            steps.append(SelectionStep(cand, "fill", True, entropy, new_entropy))
            _commit(row, new_entropy, delta, new_distinct)
            selected.append(cand)
            fill_count += 1

    prov = {"selector": "cbd", "uncertainty_metric": uncertainty.metric,
            "pool_size": n, "budget": b}
    if provenance:
        prov.update(provenance)
    return SelectionResult(
        selected=np.asarray(selected, dtype=np.int64),
        b_init=b_init,
        fill_count=fill_count,
        steps=tuple(steps),
        provenance=prov,
    )


def select_top_uncertainty(
    uncertainty: UncertaintyVector,
    b: int,
    provenance: dict | None = None,
) -> SelectionResult:
    """Top-b candidates by uncertainty, descending, ties by ascending index.

    Scores once and slices, so the work is independent of the budget. No
    diversity decisions are made, hence the empty step log.
    """
    n = len(uncertainty)
    _check_budget(b, n)
    selected = _ranked_indices(uncertainty)[:b]
    prov = {"selector": "top_uncertainty", "uncertainty_metric": uncertainty.metric,
            "pool_size": n, "budget": b}
    if provenance:
        prov.update(provenance)
    return SelectionResult(
        selected=selected.astype(np.int64),
        b_init=b,
        fill_count=0,
        steps=(),
        provenance=prov,
    )


def select_random(n: int, b: int, seed: int, provenance: dict | None = None) -> SelectionResult:
    """Seeded uniform draw of b distinct indices (control baseline)."""
    _check_budget(b, n)
    rng = np.random.default_rng(seed)
    selected = rng.choice(n, size=b, replace=False)
    prov = {"selector": "random", "pool_size": n, "budget": b, "seed": seed}
    if provenance:
        prov.update(provenance)
    return SelectionResult(
        selected=selected.astype(np.int64),
        b_init=0,
        fill_count=0,
        steps=(),
        provenance=prov,
    )
