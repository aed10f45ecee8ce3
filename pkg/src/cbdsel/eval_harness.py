"""Desk-scale experiment harness: controlled subsets, correlation, timing.

Three analyses are supported:

* correlation -- manufacture subsets of fixed size whose distinct-class
  coverage grows step by step (a proxy for actual diversity), score each
  subset with both diversity metrics, and report the Spearman rank
  correlation between them;
* diversity timing -- mean per-subset wall-clock time of the concept-entropy
  score versus the geometric log-det score over identical random subsets;
* selection timing -- end-to-end selection wall-clock per selector and
  budget, where every selector's time includes its uncertainty-ranking cost.

Timing uses the monotonic wall clock with warm-up iterations discarded and
is pinned single-threaded by default so the two metrics compete fairly; a
flag re-enables library parallelism for separate reporting.
"""

from __future__ import annotations

import time
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .concept_space import Rcs, assign_concepts
from .diversity_metrics import DEFAULT_GD_JITTER, cbd_score, gd_score
from .embstore import LabelVector
from .errors import (
    ConfigurationError,
    DegenerateCorrelationError,
    DegenerateDenominatorError,
    PersistenceError,
    PlanError,
    ShapeError,
)
from .selector import select_cbd, select_random, select_top_uncertainty
from .uncertainty_metrics import margin_uncertainty


@dataclass(frozen=True)
class ControlledSubsetPlan:
    """One seeded walk of fixed-size subsets with growing class coverage.

    The first subset is drawn from the first ``class_schedule[0]`` classes;
    each later subset replaces a seeded-random batch of current members with
    inputs from the newly introduced classes, keeping the size constant. The
    replacement rule is uniform random eviction among current members,
    constrained never to drain a covered class.
    """

    subset_size: int
    class_schedule: tuple[int, ...]
    seed: int

    def __post_init__(self):
        schedule = tuple(int(c) for c in self.class_schedule)
        object.__setattr__(self, "class_schedule", schedule)
        if not schedule:
            raise PlanError("class schedule is empty")
        if schedule[0] < 1:
            raise PlanError("class counts must be >= 1")
        if any(b <= a for a, b in zip(schedule, schedule[1:])):
            raise PlanError(f"class schedule must be strictly increasing: {schedule}")
        if self.subset_size < schedule[-1]:
            raise PlanError(
                f"subset size {self.subset_size} cannot cover {schedule[-1]} classes"
            )


@dataclass(frozen=True)
class CorrelationReport:
    """Per-subset diversity scores and their pooled rank correlation."""

    rows: tuple  # (subset_id, class_count, cbd, gd)
    rho: float
    n_subsets: int
    per_plan_rho: dict


@dataclass(frozen=True)
class TimingRow:
    label: str
    subset_size: int
    mean_ms: float
    std_ms: float
    repeats: int


def build_controlled_subsets(labels: LabelVector, plan: ControlledSubsetPlan) -> list[np.ndarray]:
    """Materialize the plan as a list of index arrays, one per schedule step.

    The distinct-label count of subset ``i`` equals ``class_schedule[i]``
    exactly and every subset has exactly ``subset_size`` members.
    """
    values = labels.values
    schedule = plan.class_schedule
    b = plan.subset_size
    if schedule[-1] > labels.num_classes:
        raise PlanError(
            f"schedule needs {schedule[-1]} classes but labels only define "
            f"{labels.num_classes}"
        )
    pools = [np.flatnonzero(values == c) for c in range(schedule[-1])]
    for c, pool in enumerate(pools):
        if pool.size == 0:
            raise PlanError(f"class {c} has no inputs")
    rng = np.random.default_rng(plan.seed)

    c0 = schedule[0]
    union = np.concatenate(pools[:c0])
    if union.size < b:
        raise PlanError(
            f"first {c0} classes hold {union.size} inputs, fewer than subset size {b}"
        )
    # one guaranteed draw per class keeps coverage exact; the rest is uniform
    anchors = np.array([rng.choice(pool) for pool in pools[:c0]], dtype=np.int64)
    rest_pool = np.setdiff1d(union, anchors)
    rest = rng.choice(rest_pool, size=b - c0, replace=False)
    current = np.concatenate([anchors, rest.astype(np.int64)]).tolist()
    subsets = [np.array(current, dtype=np.int64)]

    for prev_cov, cov in zip(schedule, schedule[1:]):
        per_new = max(1, b // cov)
        incoming: list[int] = []
        for c in range(prev_cov, cov):
            if pools[c].size < per_new:
                raise PlanError(
                    f"class {c} holds {pools[c].size} inputs, fewer than the "
                    f"{per_new} required at coverage {cov}"
                )
            incoming.extend(rng.choice(pools[c], size=per_new, replace=False).tolist())

        class_counts: dict[int, int] = {}
        for idx in current:
            lab = int(values[idx])
            class_counts[lab] = class_counts.get(lab, 0) + 1
        evict: set[int] = set()
        for pos in rng.permutation(len(current)):
            if len(evict) == len(incoming):
                break
            lab = int(values[current[pos]])
            if class_counts[lab] > 1:
                class_counts[lab] -= 1
                evict.add(int(pos))
        if len(evict) < len(incoming):
            raise PlanError(
                f"cannot evict {len(incoming)} inputs at coverage {cov} without "
                "draining a covered class"
            )
        current = [idx for pos, idx in enumerate(current) if pos not in evict]
        current.extend(incoming)
        subsets.append(np.array(current, dtype=np.int64))

    return subsets


def _average_ranks(v: np.ndarray) -> np.ndarray:
    """Average-fractional ranks: tied values share the mean of their ranks."""
    order = np.argsort(v, kind="stable")
    sv = v[order]
    starts = np.flatnonzero(np.r_[True, sv[1:] != sv[:-1]])
    ends = np.r_[starts[1:], sv.size]
    ranks = np.empty(v.size, dtype=np.float64)
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + e + 1)
    return ranks


def spearman_rho(x, y) -> float:
    """Pearson correlation of average-fractional ranks.

    Invariant under strictly monotone transforms of either input. Raises
    DegenerateCorrelationError when either input has zero rank variance.
    """
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.ndim != 1 or yv.ndim != 1:
        raise ShapeError("correlation inputs must be vectors")
    if xv.size != yv.size:
        raise ShapeError(f"length mismatch: {xv.size} vs {yv.size}")
    if xv.size < 2:
        raise ShapeError("correlation needs at least two observations")
    rx = _average_ranks(xv)
    ry = _average_ranks(yv)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0.0:
        raise DegenerateCorrelationError(
            "zero rank variance: at least one input is constant under ranking"
        )
    return float(np.clip((rx * ry).sum() / denom, -1.0, 1.0))


def run_rq1(
    embeddings_shared,
    rcs: Rcs,
    labels: LabelVector,
    plans,
    m: int,
    features_gd=None,
    gd_eps: float = DEFAULT_GD_JITTER,
) -> CorrelationReport:
    """Score every controlled subset with both metrics and correlate.

    GD is computed on ``features_gd`` when supplied and on the shared-space
    embeddings otherwise. The reported rho pools all subsets across plans;
    per-plan values are kept as diagnostics (None where undefined).
    """
    shared = np.asarray(embeddings_shared, dtype=np.float64)
    feats = shared if features_gd is None else np.asarray(features_gd, dtype=np.float64)
    if feats.shape[0] != shared.shape[0]:
        raise ShapeError(
            f"GD features have {feats.shape[0]} rows but shared embeddings "
            f"have {shared.shape[0]}"
        )
    if len(labels) != shared.shape[0]:
        raise ShapeError(
            f"{len(labels)} labels but {shared.shape[0]} embedding rows"
        )
    assignments = assign_concepts(shared, rcs.space, m)

    rows = []
    per_plan: dict[int, list[int]] = {}
    for plan_idx, plan in enumerate(plans):
        subsets = build_controlled_subsets(labels, plan)
        per_plan[plan_idx] = []
        for step, subset in enumerate(subsets):
            cbd = cbd_score([assignments[i] for i in subset])
            gd = gd_score(feats[subset], eps=gd_eps)
            per_plan[plan_idx].append(len(rows))
            rows.append(
                (f"plan{plan_idx}/step{step}", plan.class_schedule[step], cbd, gd)
            )

    cbds = np.array([r[2] for r in rows])
    gds = np.array([r[3] for r in rows])
    rho = spearman_rho(cbds, gds)
    per_plan_rho = {}
    for plan_idx, row_ids in per_plan.items():
        try:
            per_plan_rho[plan_idx] = spearman_rho(cbds[row_ids], gds[row_ids])
        except DegenerateCorrelationError:
            per_plan_rho[plan_idx] = None
    return CorrelationReport(
        rows=tuple(rows), rho=rho, n_subsets=len(rows), per_plan_rho=per_plan_rho
    )


def time_diversity(
    features_gd,
    assignments,
    sizes,
    repeats: int,
    seed: int,
    gd_eps: float = DEFAULT_GD_JITTER,
    warmup: int = 3,
    single_thread: bool = True,
) -> list[TimingRow]:
    """Mean per-subset scoring time for both metrics over shared subsets.

    The same seeded random subsets are scored by both metrics so the
    comparison is paired. Concept assignments are precomputed inputs: in a
    selection loop they are extracted once per pool, so per-subset scoring
    cost is pooling plus entropy.
    """
    feats = np.asarray(features_gd, dtype=np.float64)
    assignments = list(assignments)
    if feats.shape[0] != len(assignments):
        raise ShapeError(
            f"{len(assignments)} assignments but {feats.shape[0]} feature rows"
        )
    if repeats < 0:
        raise ConfigurationError(f"repeats must be >= 0, got {repeats}")
    if repeats == 0:
        return []
    rng = np.random.default_rng(seed)
    n = feats.shape[0]
    rows: list[TimingRow] = []
    guard = threadpool_limits(limits=1) if single_thread else nullcontext()
    with guard:
        for b in sizes:
            if b > n:
                raise ConfigurationError(f"subset size {b} exceeds pool size {n}")
            subsets = [rng.choice(n, size=b, replace=False) for _ in range(repeats)]
            scorers = (
                ("cbd", lambda sub: cbd_score([assignments[i] for i in sub])),
                ("gd", lambda sub: gd_score(feats[sub], eps=gd_eps)),
            )
            for label, scorer in scorers:
                for _ in range(warmup):
                    scorer(subsets[0])
                times = np.empty(repeats)
                for i, sub in enumerate(subsets):
                    t0 = time.perf_counter()
                    scorer(sub)
                    times[i] = time.perf_counter() - t0
                rows.append(
                    TimingRow(
                        label=label,
                        subset_size=int(b),
                        mean_ms=float(times.mean() * 1e3),
                        std_ms=float(times.std() * 1e3),
                        repeats=repeats,
                    )
                )
    return rows


_SELECTION_TIMERS = {
    "cbd": lambda probs, assignments, b, seed: select_cbd(
        assignments, margin_uncertainty(probs), b
    ),
    "margin": lambda probs, assignments, b, seed: select_top_uncertainty(
        margin_uncertainty(probs), b
    ),
    "random": lambda probs, assignments, b, seed: select_random(
        probs.shape[0], b, seed
    ),
}


def time_selection(
    probs,
    assignments,
    selectors,
    budgets,
    seed: int = 0,
    warmup: int = 1,
    repeats: int = 1,
    single_thread: bool = True,
) -> list[TimingRow]:
    """End-to-end selection wall-clock per selector and budget.

    Each timed run covers the full pipeline a deployment would pay for:
    uncertainty scoring over the whole pool plus the selection pass itself.
    The ranking-based selectors therefore share their scoring cost and the
    greedy selector adds its diversity scan on top.
    """
    probs = np.asarray(probs)
    assignments = list(assignments)
    if probs.shape[0] != len(assignments):
        raise ShapeError(
            f"{len(assignments)} assignments but {probs.shape[0]} probability rows"
        )
    for sel in selectors:
        if sel not in _SELECTION_TIMERS:
            raise ConfigurationError(
                f"unknown selector {sel!r}; expected one of {sorted(_SELECTION_TIMERS)}"
            )
    if repeats < 0:
        raise ConfigurationError(f"repeats must be >= 0, got {repeats}")
    if repeats == 0:
        return []
    rows: list[TimingRow] = []
    guard = threadpool_limits(limits=1) if single_thread else nullcontext()
    with guard:
        for sel in selectors:
            runner = _SELECTION_TIMERS[sel]
            for b in budgets:
                if b > probs.shape[0]:
                    raise ConfigurationError(
                        f"budget {b} exceeds pool size {probs.shape[0]}"
                    )
                for _ in range(warmup):
                    runner(probs, assignments, b, seed)
                times = np.empty(repeats)
                for i in range(repeats):
                    t0 = time.perf_counter()
                    runner(probs, assignments, b, seed)
                    times[i] = time.perf_counter() - t0
                rows.append(
                    TimingRow(
                        label=sel,
                        subset_size=int(b),
                        mean_ms=float(times.mean() * 1e3),
                        std_ms=float(times.std() * 1e3),
                        repeats=repeats,
                    )
                )
    return rows


def improvement_pct(acc_fine: float, acc_orig: float, acc_max: float) -> float:
    """Accuracy gain as a percentage of the maximum attainable gain."""
    if acc_max == acc_orig:
        raise DegenerateDenominatorError(
            "maximum accuracy equals the original accuracy; the normalized "
            "improvement is undefined"
        )
    return 100.0 * (acc_fine - acc_orig) / (acc_max - acc_orig)


def write_csv(path, header, rows) -> None:
    """UTF-8 CSV with a header row, comma-separated, '.' decimal point."""
    lines = [",".join(str(h) for h in header)]
    for row in rows:
        lines.append(",".join(_csv_cell(cell) for cell in row))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc


def _csv_cell(cell) -> str:
    if isinstance(cell, float):
        return repr(cell)
    return str(cell)


def format_table(header, rows) -> str:
    """Column-aligned plain-text table for standard output."""
    cells = [[str(h) for h in header]] + [
        [f"{c:.6g}" if isinstance(c, float) else str(c) for c in row] for row in rows
    ]
    widths = [max(len(line[i]) for line in cells) for i in range(len(header))]
    lines = []
    for j, line in enumerate(cells):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
