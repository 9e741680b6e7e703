"""End-to-end command-line pipeline on a miniature dataset."""

import json

import pytest

from askgrid.cli import main
from askgrid.report import read_table


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """gen -> train-performer -> pretrain-questioner -> finetune, shared by the tests."""
    root = tmp_path_factory.mktemp("cli")
    folds = root / "folds.jsonl"
    assert main([
        "gen", "--out", str(folds), "--train-scenes", "3", "--unseen-scenes", "2",
        "--n-train", "30", "--n-valid-seen", "25", "--n-valid-unseen", "25", "--seed", "6",
    ]) == 0
    perf = root / "perf.ckpt"
    assert main([
        "train-performer", "--folds", str(folds), "--out", str(perf),
        "--curves", str(root / "curves.png"), "--epochs", "2", "--seed", "0",
    ]) == 0
    q0 = root / "q0.ckpt"
    assert main([
        "pretrain-questioner", "--folds", str(folds), "--out", str(q0), "--epochs", "3",
    ]) == 0
    q_rl = root / "q_rl.ckpt"
    assert main([
        "finetune", "--folds", str(folds), "--performer", str(perf), "--questioner", str(q0),
        "--out", str(q_rl), "--iterations", "2", "--episodes-per-iter", "4",
        "--step-limit", "30", "--curves", str(root / "rl.png"),
    ]) == 0
    return root


def test_pipeline_artifacts_exist(workspace):
    for name in ("folds.jsonl", "perf.ckpt", "q0.ckpt", "q_rl.ckpt", "curves.png", "rl.png"):
        assert (workspace / name).exists(), name


def test_eval_writes_logs_table_and_figures(workspace):
    out = workspace / "eval"
    assert main([
        "eval", "--folds", str(workspace / "folds.jsonl"), "--performer", str(workspace / "perf.ckpt"),
        "--baseline", "all_qas", "--fold", "valid_unseen", "--out-dir", str(out),
        "--step-limit", "30",
    ]) == 0
    assert (out / "episodes.jsonl").exists()
    rows = read_table(out / "report.tsv")
    assert len(rows) == 1
    assert rows[0]["setting"] == "all_qas"
    assert rows[0]["fold"] == "valid_unseen"
    assert rows[0]["n_episodes"] == "25"
    for fig in ("report_success.png", "report_questions.png", "report_qtypes.png"):
        assert (out / fig).exists()


def test_eval_is_byte_identical_across_runs(workspace):
    args = [
        "eval", "--folds", str(workspace / "folds.jsonl"), "--performer", str(workspace / "perf.ckpt"),
        "--questioner", str(workspace / "q_rl.ckpt"), "--baseline", "rl_begin",
        "--fold", "valid_seen", "--step-limit", "30", "--seed", "9",
    ]
    out1, out2 = workspace / "rep1", workspace / "rep2"
    assert main(args + ["--out-dir", str(out1)]) == 0
    assert main(args + ["--out-dir", str(out2)]) == 0
    for name in ("episodes.jsonl", "report.tsv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_replay_certifies_eval_logs(workspace, capsys):
    out = workspace / "eval"
    assert main([
        "replay", "--folds", str(workspace / "folds.jsonl"),
        "--episodes", str(out / "episodes.jsonl"),
    ]) == 0
    assert "all transcripts faithful" in capsys.readouterr().out


def test_contract_violations_exit_nonzero(workspace, capsys):
    code = main([
        "replay", "--folds", str(workspace / "folds.jsonl"),
        "--episodes", str(workspace / "folds.jsonl"),
    ])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_trained_baseline_without_questioner_exits_nonzero(workspace):
    assert main([
        "eval", "--folds", str(workspace / "folds.jsonl"), "--performer", str(workspace / "perf.ckpt"),
        "--baseline", "rl_begin", "--out-dir", str(workspace / "nope"), "--step-limit", "20",
    ]) == 2


def test_finetune_summary_is_persisted(workspace):
    from askgrid.checkpoint import load_questioner

    _, extra = load_questioner(workspace / "q_rl.ckpt")
    assert "rl_report" in extra
    assert len(extra["rl_report"]["iterations"]) == 2
    assert extra["rl_report"]["performer_digest"]


def test_gen_rejects_bad_config(tmp_path):
    assert main([
        "gen", "--out", str(tmp_path / "f.jsonl"), "--train-scenes", "0",
        "--n-train", "30", "--n-valid-seen", "25", "--n-valid-unseen", "25",
    ]) == 2
