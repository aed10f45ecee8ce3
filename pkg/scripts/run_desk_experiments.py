#!/usr/bin/env python3
"""Run the three desk-scale analyses end to end and write CSV reports.

1. Correlation between concept entropy and geometric diversity over
   controlled subsets with growing class coverage.
2. Per-subset diversity scoring time for both metrics.
3. End-to-end selection time per selector (scoring included).

Usage:
    python3 scripts/run_desk_experiments.py --out-dir reports [--quick]
"""

import argparse
from pathlib import Path

import numpy as np

from cbdsel.concept_space import build_rcs
from cbdsel.eval_harness import (
    ControlledSubsetPlan,
    format_table,
    run_rq1,
    time_diversity,
    time_selection,
    write_csv,
)
from cbdsel.synthetic import make_cluster_world, make_selection_pool


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quick", action="store_true",
                        help="smaller sizes, for a fast sanity run")
    args = parser.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    n_points = 1000 if args.quick else 5000
    b = 100 if args.quick else 250
    n_plans = 4 if args.quick else 12

    print("== correlation over controlled subsets ==")
    world = make_cluster_world(
        n_points=n_points, n_clusters=10, dim=64, n_concepts=40,
        concepts_per_cluster=4, noise=0.25, seed=args.seed,
    )
    rcs = build_rcs(world.points[: n_points // 2], world.knb, m=10)
    seed_src = np.random.default_rng(args.seed)
    plans = [
        ControlledSubsetPlan(subset_size=b, class_schedule=tuple(range(2, 11)),
                             seed=int(seed_src.integers(0, 2**63 - 1)))
        for _ in range(n_plans)
    ]
    report = run_rq1(world.points, rcs, world.labels, plans, m=10)
    write_csv(out / "correlation.csv",
              ("subset_id", "class_count", "cbd_bits", "gd_score"), report.rows)
    print(f"spearman_rho={report.rho:.4f} over {report.n_subsets} subsets "
          f"-> {out / 'correlation.csv'}")

    print("\n== diversity scoring time ==")
    sizes = [100, 250] if args.quick else [500, 1000, 2500]
    repeats = 5 if args.quick else 50
    rng = np.random.default_rng(args.seed)
    n_bench = max(sizes) * 2
    feats = rng.normal(size=(n_bench, 512))
    windows = rng.integers(0, 1991, size=n_bench)[:, None] + np.arange(10)
    assignments = [w.astype(np.int64) for w in windows]
    rows = time_diversity(feats, assignments, sizes, repeats, seed=args.seed)
    table = [(r.label, r.subset_size, r.mean_ms, r.std_ms, r.repeats) for r in rows]
    write_csv(out / "diversity_time.csv",
              ("metric", "subset_size", "mean_ms", "std_ms", "repeats"), table)
    print(format_table(("metric", "subset_size", "mean_ms", "std_ms", "repeats"), table))

    print("\n== selection time ==")
    n_pool = 5000 if args.quick else 50_000
    budgets = [500] if args.quick else [5000, 10_000]
    probs, pool_assignments = make_selection_pool(
        n=n_pool, n_concepts=2000, m=10, n_classes=1000, seed=args.seed
    )
    rows = time_selection(probs, pool_assignments, ["cbd", "margin", "random"],
                          budgets, seed=args.seed, repeats=3)
    table = [(r.label, r.subset_size, r.mean_ms, r.std_ms, r.repeats) for r in rows]
    write_csv(out / "selection_time.csv",
              ("selector", "budget", "mean_ms", "std_ms", "repeats"), table)
    print(format_table(("selector", "budget", "mean_ms", "std_ms", "repeats"), table))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
