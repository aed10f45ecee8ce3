#!/usr/bin/env python3
"""Generate a self-contained demo data directory for the CLI.

Writes a synthetic cluster world as the binary files the pipeline consumes:
training/pool representations (the pool's "classifier space" is a known
affine warp of the shared space, so the fitted aligner has something real to
undo), a concept knowledge base, pool softmax outputs, and label files.

Usage:
    python3 scripts/make_demo_data.py --out-dir demo_data [--seed 0]

Then, from the output directory:
    cbdsel fit-aligner train_reps.ebin train_shared.ebin --out model.aln
    cbdsel build-rcs train_shared.ebin knb.txt knb.ebin --m 10 --out-dir rcs
    cbdsel select pool_reps.ebin --aligner model.aln --rcs-dir rcs \\
        --metric margin --probs pool.prb --percent 10 --out selection.json
"""

import argparse
from pathlib import Path

import numpy as np

from cbdsel.embstore import LabelVector, save_concept_names, save_labels, save_matrix
from cbdsel.synthetic import make_cluster_world


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--points", type=int, default=2000)
    parser.add_argument("--dim", type=int, default=64)
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    world = make_cluster_world(
        n_points=args.points, n_clusters=10, dim=args.dim, n_concepts=40,
        concepts_per_cluster=4, noise=0.25, seed=args.seed,
    )
    shared = world.points.astype(np.float64)
    warp = rng.normal(size=(args.dim, args.dim)) + 4.0 * np.eye(args.dim)
    reps = shared @ warp

    half = args.points // 2
    save_matrix(shared[:half].astype(np.float32), out / "train_shared.ebin")
    save_matrix(reps[:half].astype(np.float32), out / "train_reps.ebin")
    save_matrix(reps[half:].astype(np.float32), out / "pool_reps.ebin")
    save_matrix(world.points, out / "all_shared.ebin")
    save_concept_names(world.knb.names, out / "knb.txt")
    save_matrix(world.knb.embeddings, out / "knb.ebin")

    probs = rng.dirichlet(np.ones(10), size=args.points - half).astype(np.float32)
    probs /= probs.sum(axis=1, keepdims=True)
    save_matrix(probs, out / "pool.prb", "PRB1")

    save_labels(world.labels, out / "all.lbl")
    save_labels(
        LabelVector(values=world.labels.values[:half], num_classes=10),
        out / "train.lbl",
    )
    save_labels(
        LabelVector(values=rng.integers(0, 10, size=args.points - half), num_classes=10),
        out / "pool_pred.lbl",
    )

    print(f"wrote demo files to {out} (train={half}, pool={args.points - half})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
