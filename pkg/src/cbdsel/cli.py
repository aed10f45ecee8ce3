"""Command-line pipeline over the binary matrix / label / concept files.

Subcommands mirror the pipeline stages: ``fit-aligner`` trains the affine
map between representation spaces, ``build-rcs`` constructs the concept
vocabulary from training embeddings, ``select`` runs the diversity-gated
hybrid selection end to end, and ``eval`` drives the desk-scale experiment
harness. Every subcommand is idempotent given identical inputs and seed and
never mutates its inputs.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 internal
error.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import aligner as aligner_mod
from . import concept_space as cs
from . import eval_harness as harness
from .embstore import (
    MAGIC_EMBEDDING,
    MAGIC_PROBABILITY,
    load_concepts,
    load_labels,
    load_matrix,
)
from .errors import CbdselError, ConfigurationError
from .selector import select_cbd
from .uncertainty_metrics import DatisConfig, datis_uncertainty, margin_uncertainty


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise _UsageError(message)


class _StageFailure(Exception):
    def __init__(self, stage: str, cause: CbdselError):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except CbdselError as exc:
        raise _StageFailure(name, exc) from exc


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise _UsageError(f"expected a comma-separated integer list, got {text!r}") from exc


def _parse_schedule(text: str) -> tuple[int, ...]:
    """Either 'lo:hi' (inclusive) or a comma-separated list."""
    if ":" in text:
        lo, _, hi = text.partition(":")
        try:
            return tuple(range(int(lo), int(hi) + 1))
        except ValueError as exc:
            raise _UsageError(f"bad schedule {text!r}") from exc
    return tuple(_parse_int_list(text))


def _resolve_budget(args, pool_size: int) -> int:
    if args.b is not None:
        return args.b
    b = int(pool_size * args.percent / 100.0)
    return max(1, b)


def build_parser() -> _Parser:
    parser = _Parser(prog="cbdsel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit-aligner", help="fit the affine space aligner")
    p_fit.add_argument("source", help="source-space embeddings (EMB1)")
    p_fit.add_argument("target", help="target-space embeddings (EMB1)")
    p_fit.add_argument("--lambda", dest="ridge", type=float,
                       default=aligner_mod.DEFAULT_RIDGE,
                       help="ridge coefficient (default %(default)s)")
    p_fit.add_argument("--out", required=True, help="output model path (.aln)")

    p_rcs = sub.add_parser("build-rcs", help="build the concept vocabulary")
    p_rcs.add_argument("train_shared", help="training embeddings in the shared space (EMB1)")
    p_rcs.add_argument("knb_names", help="knowledge-base concept names (text)")
    p_rcs.add_argument("knb_emb", help="knowledge-base concept embeddings (EMB1)")
    p_rcs.add_argument("--m", type=int, default=cs.DEFAULT_TOP_M,
                       help="top concepts per image (default %(default)s)")
    p_rcs.add_argument("--out-dir", required=True)

    p_sel = sub.add_parser("select", help="run diversity-gated hybrid selection")
    p_sel.add_argument("reps", help="pool representations in the source space (EMB1)")
    p_sel.add_argument("--aligner", required=True, help="trained aligner (.aln)")
    p_sel.add_argument("--rcs-dir", required=True, help="vocabulary directory")
    p_sel.add_argument("--metric", choices=("margin", "datis"), default="margin")
    p_sel.add_argument("--probs", help="pool class probabilities (PRB1), for --metric margin")
    p_sel.add_argument("--train-z", help="training representations (EMB1), for --metric datis")
    p_sel.add_argument("--train-labels", help="training labels (LBL1), for --metric datis")
    p_sel.add_argument("--predicted", help="model-predicted pool labels (LBL1), for --metric datis")
    group = p_sel.add_mutually_exclusive_group(required=True)
    group.add_argument("--b", type=int, help="absolute selection budget")
    group.add_argument("--percent", type=float, help="budget as percent of the pool (0, 100]")
    p_sel.add_argument("--m", type=int, default=None,
                       help="top concepts per image (default: the vocabulary's m)")
    p_sel.add_argument("--k", type=int, default=10, help="neighbor count for datis")
    p_sel.add_argument("--tau", type=float, default=1.0, help="distance temperature for datis")
    p_sel.add_argument("--seed", type=int, default=0)
    p_sel.add_argument("--threads", type=int, default=1)
    p_sel.add_argument("--out", required=True, help="output selection JSON")

    p_eval = sub.add_parser("eval", help="run the experiment harness")
    mode = p_eval.add_mutually_exclusive_group(required=True)
    mode.add_argument("--rq1", action="store_true",
                      help="controlled-subset correlation between the two diversity scores")
    mode.add_argument("--bench-diversity", action="store_true",
                      help="per-subset diversity scoring time")
    mode.add_argument("--bench-selection", action="store_true",
                      help="end-to-end selection time per selector")
    p_eval.add_argument("--shared", help="shared-space embeddings (EMB1)")
    p_eval.add_argument("--labels", help="labels (LBL1), for --rq1")
    p_eval.add_argument("--probs", help="pool probabilities (PRB1), for --bench-selection")
    p_eval.add_argument("--rcs-dir", help="vocabulary directory")
    p_eval.add_argument("--gd-features", help="separate feature matrix for the geometric score")
    p_eval.add_argument("--b", type=int, default=250, help="controlled-subset size for --rq1")
    p_eval.add_argument("--schedule", default="2:10",
                        help="class-count schedule, 'lo:hi' or comma list (default %(default)s)")
    p_eval.add_argument("--subsets", type=int, default=100,
                        help="minimum number of controlled subsets for --rq1")
    p_eval.add_argument("--sizes", default="100,200",
                        help="subset sizes for --bench-diversity")
    p_eval.add_argument("--budgets", default="50,100",
                        help="budgets for --bench-selection")
    p_eval.add_argument("--selectors", default="cbd,margin",
                        help="comma list of selectors for --bench-selection")
    p_eval.add_argument("--repeats", type=int, default=10)
    p_eval.add_argument("--m", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--threads", type=int, default=1)
    p_eval.add_argument("--out", required=True, help="output CSV path")

    return parser


def _cmd_fit_aligner(args) -> int:
    source = _stage("load-source", load_matrix, args.source, MAGIC_EMBEDDING)
    target = _stage("load-target", load_matrix, args.target, MAGIC_EMBEDDING)
    model = _stage("fit", aligner_mod.fit_aligner, source, target, args.ridge)
    _stage("write-model", aligner_mod.save_aligner, model, args.out)
    print(f"r2={model.r_squared:.6f}")
    return 0


def _cmd_build_rcs(args) -> int:
    train = _stage("load-train", load_matrix, args.train_shared, MAGIC_EMBEDDING)
    knb = _stage("load-knowledge-base", load_concepts, args.knb_names, args.knb_emb)
    rcs = _stage("build-vocabulary", cs.build_rcs, train, knb, args.m)
    _stage("write-vocabulary", cs.save_rcs, rcs, args.out_dir)
    print(f"rcs_size={len(rcs)}")
    return 0


def _cmd_select(args) -> int:
    reps = _stage("load-pool", load_matrix, args.reps, MAGIC_EMBEDDING)
    model = _stage("load-aligner", aligner_mod.load_aligner, args.aligner)
    rcs = _stage("load-vocabulary", cs.load_rcs, args.rcs_dir)
    m = args.m if args.m is not None else rcs.top_m

    if args.percent is not None and not 0.0 < args.percent <= 100.0:
        raise _UsageError(f"--percent must lie in (0, 100], got {args.percent}")
    budget = _resolve_budget(args, reps.shape[0])

    shared = _stage("align", aligner_mod.map_embeddings, model, reps)
    assignments = _stage("assign-concepts", cs.assign_concepts, shared, rcs.space, m)

    if args.metric == "margin":
        if not args.probs:
            raise _UsageError("--metric margin requires --probs")
        probs = _stage("load-probabilities", load_matrix, args.probs, MAGIC_PROBABILITY)
        if probs.shape[0] != reps.shape[0]:
            raise _StageFailure(
                "uncertainty",
                ConfigurationError(
                    f"{probs.shape[0]} probability rows for {reps.shape[0]} pool rows"
                ),
            )
        uncertainty = _stage("uncertainty", margin_uncertainty, probs)
    else:
        missing = [
            flag
            for flag, value in (
                ("--train-z", args.train_z),
                ("--train-labels", args.train_labels),
                ("--predicted", args.predicted),
            )
            if not value
        ]
        if missing:
            raise _UsageError(f"--metric datis requires {', '.join(missing)}")
        train_z = _stage("load-train-z", load_matrix, args.train_z, MAGIC_EMBEDDING)
        train_labels = _stage("load-train-labels", load_labels, args.train_labels)
        predicted = _stage("load-predicted", load_labels, args.predicted)
        cfg = _stage("uncertainty", DatisConfig, args.k, args.tau)
        uncertainty = _stage(
            "uncertainty", datis_uncertainty, reps, predicted, train_z, train_labels, cfg
        )

    provenance = {
        "m": m,
        "seed": args.seed,
        "budget_percent": args.percent,
        "k": args.k if args.metric == "datis" else None,
        "tau": args.tau if args.metric == "datis" else None,
    }
    result = _stage("select", select_cbd, assignments, uncertainty, budget, provenance)
    try:
        Path(args.out).write_text(result.to_json(), encoding="utf-8")
    except OSError as exc:
        raise _StageFailure("write-output", CbdselError(str(exc))) from exc
    print(f"selected={len(result)} fill_count={result.fill_count} seed={args.seed}")
    return 0


def _load_rcs_and_assign(args, shared):
    rcs = _stage("load-vocabulary", cs.load_rcs, args.rcs_dir)
    m = args.m if args.m is not None else rcs.top_m
    assignments = _stage("assign-concepts", cs.assign_concepts, shared, rcs.space, m)
    return rcs, m, assignments


def _cmd_eval(args) -> int:
    single = args.threads <= 1
    if args.rq1:
        for flag, value in (("--shared", args.shared), ("--labels", args.labels),
                            ("--rcs-dir", args.rcs_dir)):
            if not value:
                raise _UsageError(f"--rq1 requires {flag}")
        shared = _stage("load-shared", load_matrix, args.shared, MAGIC_EMBEDDING)
        labels = _stage("load-labels", load_labels, args.labels)
        rcs = _stage("load-vocabulary", cs.load_rcs, args.rcs_dir)
        m = args.m if args.m is not None else rcs.top_m
        features = None
        if args.gd_features:
            features = _stage("load-gd-features", load_matrix, args.gd_features, MAGIC_EMBEDDING)
        schedule = _parse_schedule(args.schedule)
        n_plans = max(1, -(-args.subsets // len(schedule)))
        seed_source = np.random.default_rng(args.seed)
        plans = [
            harness.ControlledSubsetPlan(
                subset_size=args.b,
                class_schedule=schedule,
                seed=int(seed_source.integers(0, 2**63 - 1)),
            )
            for _ in range(n_plans)
        ]
        report = _stage(
            "correlate", harness.run_rq1, shared, rcs, labels, plans, m, features
        )
        harness.write_csv(
            args.out, ("subset_id", "class_count", "cbd_bits", "gd_score"), report.rows
        )
        print(harness.format_table(
            ("subset_id", "class_count", "cbd_bits", "gd_score"), report.rows[:10]
        ))
        if report.n_subsets > 10:
            print(f"... ({report.n_subsets} subsets total)")
        print(f"spearman_rho={report.rho:.6f} n_subsets={report.n_subsets} seed={args.seed}")
        return 0

    if args.bench_diversity:
        for flag, value in (("--shared", args.shared), ("--rcs-dir", args.rcs_dir)):
            if not value:
                raise _UsageError(f"--bench-diversity requires {flag}")
        shared = _stage("load-shared", load_matrix, args.shared, MAGIC_EMBEDDING)
        _, _, assignments = _load_rcs_and_assign(args, shared)
        features = shared
        if args.gd_features:
            features = _stage("load-gd-features", load_matrix, args.gd_features, MAGIC_EMBEDDING)
        rows = _stage(
            "benchmark", harness.time_diversity, features, assignments,
            _parse_int_list(args.sizes), args.repeats, args.seed,
            single_thread=single,
        )
        table = [(r.label, r.subset_size, r.mean_ms, r.std_ms, r.repeats) for r in rows]
        harness.write_csv(args.out, ("metric", "subset_size", "mean_ms", "std_ms", "repeats"), table)
        print(harness.format_table(("metric", "subset_size", "mean_ms", "std_ms", "repeats"), table))
        print(f"seed={args.seed}")
        return 0

    for flag, value in (("--probs", args.probs), ("--shared", args.shared),
                        ("--rcs-dir", args.rcs_dir)):
        if not value:
            raise _UsageError(f"--bench-selection requires {flag}")
    probs = _stage("load-probabilities", load_matrix, args.probs, MAGIC_PROBABILITY)
    shared = _stage("load-shared", load_matrix, args.shared, MAGIC_EMBEDDING)
    _, _, assignments = _load_rcs_and_assign(args, shared)
    rows = _stage(
        "benchmark", harness.time_selection, probs, assignments,
        [s.strip() for s in args.selectors.split(",") if s.strip()],
        _parse_int_list(args.budgets), args.seed,
        1, args.repeats, single,
    )
    table = [(r.label, r.subset_size, r.mean_ms, r.std_ms, r.repeats) for r in rows]
    harness.write_csv(args.out, ("selector", "budget", "mean_ms", "std_ms", "repeats"), table)
    print(harness.format_table(("selector", "budget", "mean_ms", "std_ms", "repeats"), table))
    print(f"seed={args.seed}")
    return 0


_COMMANDS = {
    "fit-aligner": _cmd_fit_aligner,
    "build-rcs": _cmd_build_rcs,
    "select": _cmd_select,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1

    threads = getattr(args, "threads", 1)
    guard = threadpool_limits(limits=threads) if threads >= 1 else nullcontext()
    try:
        with guard:
            return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except _StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CbdselError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
