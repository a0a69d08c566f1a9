"""End-to-end runs of every subcommand against a small injected graph."""

import json

import numpy as np
import pytest

from trigad.cli import cli_main
from trigad.config import default_config, dump_config
from trigad.evaluate import (HISTOGRAM_HEADER, combine_scores,
                             read_scores_csv, rank_nodes, write_scores_csv)
from trigad.graph import (InjectionConfig, inject_anomalies, load_graph,
                          save_graph, synthetic_communities)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Clean graph on disk, tiny config, and the inject/train/score chain."""
    root = tmp_path_factory.mktemp("cliws")
    g = synthetic_communities(60, 6, 0.15, 0.01, seed=0)
    save_graph(g, root / "edges.txt", root / "attrs.csv")

    cfg = default_config()
    cfg.model.hidden = 6
    cfg.model.attn_dim = 4
    cfg.train.epochs_pretrain = 4
    cfg.train.epochs_attr = 3
    cfg.train.epochs_struct = 3
    cfg.train.epochs_mix = 4
    (root / "tiny.ini").write_text(dump_config(cfg))

    inj = root / "injected"
    assert cli_main(["inject",
                     "--edges", str(root / "edges.txt"),
                     "--attrs", str(root / "attrs.csv"),
                     "--out-dir", str(inj),
                     "--cliques", "1", "--clique-size", "5",
                     "--attr-count", "4", "--pool", "20",
                     "--mixed", "2", "--seed", "3"]) == 0

    ckpt = root / "ckpt"
    assert cli_main(["train",
                     "--edges", str(inj / "edges.txt"),
                     "--attrs", str(inj / "attrs.csv"),
                     "--out-dir", str(ckpt),
                     "--config", str(root / "tiny.ini")]) == 0

    scores = root / "scores.csv"
    assert cli_main(["score",
                     "--edges", str(inj / "edges.txt"),
                     "--attrs", str(inj / "attrs.csv"),
                     "--labels", str(inj / "labels.txt"),
                     "--ckpt-dir", str(ckpt),
                     "--out", str(scores),
                     "--config", str(root / "tiny.ini")]) == 0

    return {"root": root, "clean_graph": g, "injected": inj, "ckpt": ckpt,
            "scores": scores, "cfg_path": root / "tiny.ini", "cfg": cfg}


def test_inject_writes_the_same_graph_the_library_produces(workspace):
    inj_dir = workspace["injected"]
    got = load_graph(inj_dir / "edges.txt", inj_dir / "attrs.csv",
                     inj_dir / "labels.txt")
    want = inject_anomalies(workspace["clean_graph"], InjectionConfig(
        clique_count=1, clique_size=5, attr_anom_count=4,
        candidate_pool=20, mixed_count=2, seed=3))
    assert got.n == want.n
    np.testing.assert_array_equal(got.attributes, want.attributes)
    np.testing.assert_array_equal(got.labels, want.labels)
    assert (got.adjacency != want.adjacency).nnz == 0
    counts = np.bincount(got.labels, minlength=4)
    assert counts[1] == 4 and counts[2] == 5 and counts[3] == 2


def test_train_writes_checkpoints_and_manifest(workspace):
    names = sorted(p.name for p in workspace["ckpt"].iterdir())
    assert names == ["manifest.json", "phase1-structure.ckpt",
                     "phase2-attribute.ckpt", "phase3-structure.ckpt",
                     "phase4-mixture.ckpt"]
    manifest = json.loads((workspace["ckpt"] / "manifest.json").read_text())
    assert manifest["mode"] == "sequential"
    assert len(manifest["phases"]) == 4


def test_train_is_reproducible_through_the_cli(workspace, tmp_path):
    inj = workspace["injected"]
    args = ["train", "--edges", str(inj / "edges.txt"),
            "--attrs", str(inj / "attrs.csv"),
            "--config", str(workspace["cfg_path"])]
    assert cli_main(args + ["--out-dir", str(tmp_path / "again")]) == 0
    for name in ("manifest.json", "phase1-structure.ckpt",
                 "phase2-attribute.ckpt", "phase3-structure.ckpt",
                 "phase4-mixture.ckpt"):
        assert (tmp_path / "again" / name).read_bytes() == \
            (workspace["ckpt"] / name).read_bytes()


def test_score_csv_is_consistent(workspace):
    chans, combined, ranks, labels = read_scores_csv(workspace["scores"])
    assert chans.shape == (60, 3)
    assert np.all(np.isfinite(chans)) and np.all(chans >= 0.0)
    cfg = workspace["cfg"]
    lambdas = (cfg.eval.lambda_attr, cfg.eval.lambda_struct,
               cfg.eval.lambda_mix)
    np.testing.assert_array_equal(
        combined, combine_scores(chans[:, 0], chans[:, 1], chans[:, 2],
                                 lambdas))
    np.testing.assert_array_equal(ranks, rank_nodes(combined))
    assert labels is not None and labels.shape == (60,)


def test_eval_reports_metrics(workspace, tmp_path, capsys):
    out = tmp_path / "report.json"
    assert cli_main(["eval", "--scores", str(workspace["scores"]),
                     "--out", str(out),
                     "--config", str(workspace["cfg_path"])]) == 0
    printed = capsys.readouterr().out
    report = json.loads(out.read_text())
    metrics = report["metrics"]
    for key in ("auc_roc", "auc_pr", "macro_f1"):
        assert 0.0 <= metrics[key] <= 1.0
        assert f"{key}={metrics[key]:.4f}" in printed
    assert len(report["nodes"]) == 60

    again = tmp_path / "report2.json"
    assert cli_main(["eval", "--scores", str(workspace["scores"]),
                     "--out", str(again),
                     "--config", str(workspace["cfg_path"])]) == 0
    assert out.read_bytes() == again.read_bytes()


def test_eval_perfect_scores_hit_every_ceiling(tmp_path, capsys):
    labels = np.array([1, 0, 2, 0, 0, 0, 3, 0])
    y = (labels != 0).astype(np.float64)
    chans = np.column_stack([y, y, y])
    combined = combine_scores(y, y, y, (0.3, 0.3, 0.3))
    path = tmp_path / "perfect.csv"
    write_scores_csv(path, chans, combined, rank_nodes(combined), labels)
    out = tmp_path / "report.json"
    assert cli_main(["eval", "--scores", str(path), "--out", str(out)]) == 0
    metrics = json.loads(out.read_text())["metrics"]
    assert metrics["auc_roc"] == pytest.approx(1.0)
    assert metrics["auc_pr"] == pytest.approx(1.0)
    assert metrics["macro_f1"] == pytest.approx(1.0)
    assert "auc_roc=1.0000" in capsys.readouterr().out


def test_eval_without_labels_skips_metrics(tmp_path, capsys):
    chans = np.random.default_rng(0).random((5, 3))
    combined = combine_scores(chans[:, 0], chans[:, 1], chans[:, 2],
                              (1, 1, 1))
    path = tmp_path / "unlabeled.csv"
    write_scores_csv(path, chans, combined, rank_nodes(combined))
    out = tmp_path / "report.json"
    assert cli_main(["eval", "--scores", str(path), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["metrics"] is None
    assert "no labels" in capsys.readouterr().out


def test_curvature_stats_artifacts(workspace, tmp_path):
    inj = workspace["injected"]
    prefix = str(tmp_path / "curv")
    assert cli_main(["curvature-stats",
                     "--edges", str(inj / "edges.txt"),
                     "--attrs", str(inj / "attrs.csv"),
                     "--labels", str(inj / "labels.txt"),
                     "--out-prefix", prefix,
                     "--delta", "0.5", "--bins", "8"]) == 0
    edge_lines = (tmp_path / "curv-edges.csv").read_text().splitlines()
    assert edge_lines[0] == "i,j,kappa_raw,kappa_norm,edge_class"
    n_edges = len(edge_lines) - 1
    assert n_edges > 0
    for line in edge_lines[1:]:
        i, j, raw, norm, cls = line.split(",")
        assert int(i) < int(j)
        assert 0.0 < float(norm) < 1.0
        assert float(raw) <= 1.0
        assert cls in ("nn", "na", "aa")

    hist_lines = (tmp_path / "curv-histogram.csv").read_text().splitlines()
    assert hist_lines[0] == HISTOGRAM_HEADER
    assert len(hist_lines) == 9

    hist = json.loads((tmp_path / "curv-histogram.json").read_text())
    total = sum(hist["count_nn"]) + sum(hist["count_na"]) \
        + sum(hist["count_aa"])
    assert total == n_edges
    assert hist["mean_nn"] is not None and 0.0 < hist["mean_nn"] < 1.0


def test_gradcheck_command_passes(capsys):
    assert cli_main(["gradcheck", "--seed", "0"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 8  # seven checks plus the summary line
    assert all("ok" in line for line in out[:7])
    assert "worst relative error" in out[7]


def test_sweep_runs_every_cell(workspace, tmp_path):
    inj = workspace["injected"]
    out_dir = tmp_path / "sweeps"
    args = ["sweep",
            "--edges", str(inj / "edges.txt"),
            "--attrs", str(inj / "attrs.csv"),
            "--labels", str(inj / "labels.txt"),
            "--out-dir", str(out_dir),
            "--grid", "eval.lambda_attr=0.5,1.0",
            "--grid", "train.epochs_mix=2",
            "--config", str(workspace["cfg_path"]),
            "--seed", "1"]
    assert cli_main(args) == 0
    manifest = json.loads((out_dir / "sweep.json").read_text())
    assert len(manifest["cells"]) == 2
    for idx, cell in enumerate(manifest["cells"]):
        assert cell["index"] == idx
        assert cell["assignment"]["train.epochs_mix"] == "2"
        assert 0.0 <= cell["metrics"]["auc_roc"] <= 1.0
        report = json.loads((out_dir / cell["report"]).read_text())
        assert report["metadata"]["sweep_cell"]["index"] == idx

    # the threaded path must produce the same artifacts
    par_dir = tmp_path / "sweeps-par"
    par_args = list(args)
    par_args[par_args.index(str(out_dir))] = str(par_dir)
    assert cli_main(par_args + ["--jobs", "2"]) == 0
    assert (par_dir / "sweep.json").read_bytes() == \
        (out_dir / "sweep.json").read_bytes()
    for cell in manifest["cells"]:
        assert (par_dir / cell["report"]).read_bytes() == \
            (out_dir / cell["report"]).read_bytes()


def test_usage_errors_exit_2(capsys):
    assert cli_main(["no-such-command"]) == 2
    assert cli_main(["gradcheck", "--no-such-flag"]) == 2
    assert cli_main(["score"]) == 2  # missing required arguments
    capsys.readouterr()


def test_runtime_failures_exit_1(workspace, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,score\n0,1.0\n")
    assert cli_main(["eval", "--scores", str(bad),
                     "--out", str(tmp_path / "r.json")]) == 1
    assert "error:" in capsys.readouterr().err

    inj = workspace["injected"]
    assert cli_main(["sweep",
                     "--edges", str(inj / "edges.txt"),
                     "--attrs", str(inj / "attrs.csv"),
                     "--labels", str(inj / "labels.txt"),
                     "--out-dir", str(tmp_path / "s"),
                     "--grid", "malformed-spec"]) == 1
    assert "--grid" in capsys.readouterr().err


def test_help_exits_cleanly(capsys):
    assert cli_main(["--help"]) == 0
    assert "inject" in capsys.readouterr().out
