"""End-to-end command-line pipeline over file fixtures."""

import json

import numpy as np
import pytest

from cbdsel.cli import main
from cbdsel.concept_space import build_rcs, load_rcs
from cbdsel.embstore import (
    LabelVector,
    save_concept_names,
    save_labels,
    save_matrix,
)
from cbdsel.synthetic import make_cluster_world


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """A coherent file fixture: train/pool splits plus a known affine warp."""
    root = tmp_path_factory.mktemp("pipeline")
    rng = np.random.default_rng(21)
    world = make_cluster_world(
        n_points=120, n_clusters=4, dim=12, n_concepts=16,
        concepts_per_cluster=4, noise=0.2, seed=21,
    )
    shared = world.points.astype(np.float64)

    # the classifier's internal space is an invertible warp of the shared one
    warp = rng.normal(size=(12, 12)) + 4.0 * np.eye(12)
    reps = shared @ warp

    train, pool = slice(0, 60), slice(60, 120)
    save_matrix(shared[train].astype(np.float32), root / "train_shared.ebin")
    save_matrix(reps[train].astype(np.float32), root / "train_reps.ebin")
    save_matrix(reps[pool].astype(np.float32), root / "pool_reps.ebin")
    save_concept_names(world.knb.names, root / "knb.txt")
    save_matrix(world.knb.embeddings, root / "knb.ebin")

    probs = rng.dirichlet(np.ones(4), size=60).astype(np.float32)
    probs /= probs.sum(axis=1, keepdims=True)
    save_matrix(probs, root / "pool.prb", "PRB1")

    save_labels(LabelVector(values=world.labels.values[train], num_classes=4),
                root / "train.lbl")
    save_labels(LabelVector(values=rng.integers(0, 4, size=60), num_classes=4),
                root / "pool_pred.lbl")
    save_labels(world.labels, root / "all.lbl")
    save_matrix(world.points, root / "all_shared.ebin")
    return root


def test_fit_aligner_and_select_margin(pipeline_dir, capsys):
    root = pipeline_dir
    rc = main([
        "fit-aligner", str(root / "train_reps.ebin"), str(root / "train_shared.ebin"),
        "--out", str(root / "model.aln"),
    ])
    out = capsys.readouterr().out
    assert rc == 0
    assert out.startswith("r2=")
    assert float(out.split("=")[1]) > 0.99  # noiseless invertible warp

    rc = main([
        "build-rcs", str(root / "train_shared.ebin"), str(root / "knb.txt"),
        str(root / "knb.ebin"), "--m", "5", "--out-dir", str(root / "rcs"),
    ])
    out = capsys.readouterr().out
    assert rc == 0
    assert out.startswith("rcs_size=")
    assert load_rcs(root / "rcs").top_m == 5

    rc = main([
        "select", str(root / "pool_reps.ebin"),
        "--aligner", str(root / "model.aln"), "--rcs-dir", str(root / "rcs"),
        "--metric", "margin", "--probs", str(root / "pool.prb"),
        "--b", "12", "--out", str(root / "sel.json"),
    ])
    out = capsys.readouterr().out
    assert rc == 0
    assert "selected=12" in out and "seed=0" in out
    payload = json.loads((root / "sel.json").read_text())
    assert len(payload["selected"]) == 12
    assert payload["provenance"]["uncertainty_metric"] == "margin"


def test_select_is_byte_identical_across_runs(pipeline_dir, capsys):
    root = pipeline_dir
    args = [
        "select", str(root / "pool_reps.ebin"),
        "--aligner", str(root / "model.aln"), "--rcs-dir", str(root / "rcs"),
        "--metric", "margin", "--probs", str(root / "pool.prb"),
        "--percent", "20", "--seed", "5",
    ]
    assert main(args + ["--out", str(root / "run1.json")]) == 0
    assert main(args + ["--out", str(root / "run2.json")]) == 0
    capsys.readouterr()
    assert (root / "run1.json").read_bytes() == (root / "run2.json").read_bytes()
    payload = json.loads((root / "run1.json").read_text())
    assert len(payload["selected"]) == 12  # floor(60 * 20%)


def test_select_with_datis_metric(pipeline_dir, capsys):
    root = pipeline_dir
    rc = main([
        "select", str(root / "pool_reps.ebin"),
        "--aligner", str(root / "model.aln"), "--rcs-dir", str(root / "rcs"),
        "--metric", "datis", "--train-z", str(root / "train_reps.ebin"),
        "--train-labels", str(root / "train.lbl"),
        "--predicted", str(root / "pool_pred.lbl"),
        "--k", "5", "--tau", "2.0",
        "--b", "10", "--out", str(root / "sel_datis.json"),
    ])
    assert rc == 0
    capsys.readouterr()
    payload = json.loads((root / "sel_datis.json").read_text())
    assert payload["provenance"]["uncertainty_metric"] == "datis"
    assert payload["provenance"]["k"] == 5
    assert payload["provenance"]["tau"] == 2.0


def test_fit_aligner_row_mismatch_is_data_error(pipeline_dir, tmp_path, capsys):
    root = pipeline_dir
    bad = tmp_path / "bad.ebin"
    save_matrix(np.ones((3, 12), dtype=np.float32), bad)
    rc = main([
        "fit-aligner", str(root / "train_reps.ebin"), str(bad),
        "--out", str(tmp_path / "m.aln"),
    ])
    assert rc == 2
    err = capsys.readouterr().err
    assert "error: fit" in err and "rows" in err


def test_corrupt_input_names_the_stage(pipeline_dir, tmp_path, capsys):
    truncated = tmp_path / "trunc.ebin"
    truncated.write_bytes((pipeline_dir / "pool_reps.ebin").read_bytes()[:20])
    rc = main([
        "select", str(truncated),
        "--aligner", str(pipeline_dir / "model.aln"),
        "--rcs-dir", str(pipeline_dir / "rcs"),
        "--metric", "margin", "--probs", str(pipeline_dir / "pool.prb"),
        "--b", "3", "--out", str(tmp_path / "x.json"),
    ])
    assert rc == 2
    assert "load-pool" in capsys.readouterr().err


def test_usage_errors_exit_one(pipeline_dir, capsys):
    assert main(["select", str(pipeline_dir / "pool_reps.ebin")]) == 1
    capsys.readouterr()
    # datis without its inputs is a usage error too
    rc = main([
        "select", str(pipeline_dir / "pool_reps.ebin"),
        "--aligner", str(pipeline_dir / "model.aln"),
        "--rcs-dir", str(pipeline_dir / "rcs"),
        "--metric", "datis", "--b", "3", "--out", "x.json",
    ])
    assert rc == 1
    assert "--train-z" in capsys.readouterr().err
    assert main(["no-such-command"]) == 1
    capsys.readouterr()


def test_percent_out_of_range(pipeline_dir, capsys):
    rc = main([
        "select", str(pipeline_dir / "pool_reps.ebin"),
        "--aligner", str(pipeline_dir / "model.aln"),
        "--rcs-dir", str(pipeline_dir / "rcs"),
        "--metric", "margin", "--probs", str(pipeline_dir / "pool.prb"),
        "--percent", "120", "--out", "x.json",
    ])
    assert rc == 1
    capsys.readouterr()


def test_select_redundant_pool_reports_fill(pipeline_dir, tmp_path, capsys):
    # a pool of identical representations maps to one shared point, so with
    # m=1 every candidate carries the same single concept: the greedy phase
    # accepts nobody and the fill fallback must top the subset up
    root = pipeline_dir
    rng = np.random.default_rng(3)
    one_rep = np.repeat(rng.normal(size=(1, 12)), 20, axis=0).astype(np.float32)
    save_matrix(one_rep, tmp_path / "redundant.ebin")
    probs = rng.dirichlet(np.ones(4), size=20).astype(np.float32)
    probs /= probs.sum(axis=1, keepdims=True)
    save_matrix(probs, tmp_path / "redundant.prb", "PRB1")

    rc = main([
        "select", str(tmp_path / "redundant.ebin"),
        "--aligner", str(root / "model.aln"), "--rcs-dir", str(root / "rcs"),
        "--metric", "margin", "--probs", str(tmp_path / "redundant.prb"),
        "--m", "1", "--b", "5", "--out", str(tmp_path / "red.json"),
    ])
    out = capsys.readouterr().out
    assert rc == 0
    assert "fill_count=4" in out
    payload = json.loads((tmp_path / "red.json").read_text())
    assert payload["fill_count"] == 4
    assert len(payload["selected"]) == 5


def test_eval_rq1(pipeline_dir, tmp_path, capsys):
    out_csv = tmp_path / "rq1.csv"
    rc = main([
        "eval", "--rq1",
        "--shared", str(pipeline_dir / "all_shared.ebin"),
        "--labels", str(pipeline_dir / "all.lbl"),
        "--rcs-dir", str(pipeline_dir / "rcs"),
        "--b", "30", "--schedule", "2:4", "--subsets", "12",
        "--seed", "3", "--out", str(out_csv),
    ])
    out = capsys.readouterr().out
    assert rc == 0
    assert "spearman_rho=" in out and "n_subsets=12" in out
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "subset_id,class_count,cbd_bits,gd_score"
    assert len(lines) == 13


def test_eval_bench_diversity(pipeline_dir, tmp_path, capsys):
    out_csv = tmp_path / "div.csv"
    rc = main([
        "eval", "--bench-diversity",
        "--shared", str(pipeline_dir / "all_shared.ebin"),
        "--rcs-dir", str(pipeline_dir / "rcs"),
        "--sizes", "10,20", "--repeats", "3",
        "--out", str(out_csv),
    ])
    assert rc == 0
    assert "seed=0" in capsys.readouterr().out
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "metric,subset_size,mean_ms,std_ms,repeats"
    assert len(lines) == 5  # two metrics x two sizes


def test_eval_bench_selection(pipeline_dir, tmp_path, capsys):
    out_csv = tmp_path / "sel.csv"
    rc = main([
        "eval", "--bench-selection",
        "--probs", str(pipeline_dir / "pool.prb"),
        "--shared", str(pipeline_dir / "pool_reps.ebin"),
        "--rcs-dir", str(pipeline_dir / "rcs"),
        "--selectors", "cbd,margin,random", "--budgets", "5,10",
        "--out", str(out_csv),
    ])
    assert rc == 0
    capsys.readouterr()
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "selector,budget,mean_ms,std_ms,repeats"
    assert len(lines) == 7


def test_eval_missing_required_flag(tmp_path, capsys):
    rc = main(["eval", "--rq1", "--out", str(tmp_path / "x.csv")])
    assert rc == 1
    assert "--shared" in capsys.readouterr().err


def test_inputs_never_mutated(pipeline_dir):
    before = (pipeline_dir / "pool_reps.ebin").read_bytes()
    main([
        "select", str(pipeline_dir / "pool_reps.ebin"),
        "--aligner", str(pipeline_dir / "model.aln"),
        "--rcs-dir", str(pipeline_dir / "rcs"),
        "--metric", "margin", "--probs", str(pipeline_dir / "pool.prb"),
        "--b", "3", "--out", str(pipeline_dir / "tmp_sel.json"),
    ])
    assert (pipeline_dir / "pool_reps.ebin").read_bytes() == before
