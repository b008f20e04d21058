"""End-to-end CLI runs on small synthetic inputs."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from netcp.cli import main
from netcp.io import read_matrix_csv


@pytest.fixture
def data_csv(tmp_path, rng):
    y = np.concatenate([rng.normal(0, 1, 40), rng.normal(5, 1, 40)])
    z = rng.normal(0, 1, 80)
    path = tmp_path / "data.csv"
    rows = ["a,b"] + [f"{v},{w}" for v, w in zip(y, z)]
    path.write_text("\n".join(rows) + "\n")
    return path


def test_run_writes_outputs(tmp_path, data_csv):
    out = tmp_path / "out"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "model": "yao", "segment_model": "gauss_mean",
        "segment_hyper": {"sigma2": 1.0, "gamma2": 4.0},
        "n_iters": 120, "burn_in": 20, "particles": 12, "seed": 3,
    }))
    runner = CliRunner()
    result = runner.invoke(main, ["run", "--input", str(data_csv),
                                  "--config", str(cfg),
                                  "--output-dir", str(out)])
    assert result.exit_code == 0, result.output
    probs, header = read_matrix_csv(out / "cp_prob.csv")
    assert header == ["a", "b"]
    assert probs.shape == (80, 2)
    assert probs[:, 0].argmax() in range(37, 44)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 3
    assert manifest["backend"] in ("cython", "python")
    assert manifest["preprocess"]["filter_mode"] is None


def test_run_flag_overrides_and_preprocessing(tmp_path, data_csv):
    out = tmp_path / "out2"
    runner = CliRunner()
    result = runner.invoke(main, [
        "run", "--input", str(data_csv), "--output-dir", str(out),
        "--model", "yao", "--segment-model", "gauss_mean",
        "--iters", "60", "--burn-in", "10", "--particles", "8", "--seed", "1",
        "--standardize",
    ])
    assert result.exit_code == 0, result.output
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["preprocess"]["standardize"] is True
    assert manifest["config"]["n_iters"] == 60


def test_run_rejects_bad_bandpass(tmp_path, data_csv):
    runner = CliRunner()
    result = runner.invoke(main, ["run", "--input", str(data_csv),
                                  "--output-dir", str(tmp_path / "x"),
                                  "--bandpass", "16-2-4"])
    assert result.exit_code != 0
    assert "LO:HI:ORDER" in result.output


def test_evidence_command(tmp_path, data_csv):
    out = tmp_path / "ev"
    runner = CliRunner()
    result = runner.invoke(main, [
        "evidence", "--input", str(data_csv), "--output-dir", str(out),
        "--model", "yao", "--segment-model", "gauss_mean",
        "--particles", "8", "--seed", "2",
        "--evidence-iters", "40", "--evidence-burn-in", "10",
    ])
    assert result.exit_code == 0, result.output
    payload = json.loads((out / "evidence.json").read_text())
    assert np.isfinite(payload["log_evidence"])
    assert len(payload["terms"]) == 80
    assert payload["config"]["evidence"]["iters"] == 40


def test_study_command(tmp_path):
    out = tmp_path / "report.json"
    runner = CliRunner()
    result = runner.invoke(main, [
        "study", "--scenario", "S5", "--likelihood", "gauss_mean",
        "--replicates", "1", "--t-len", "60", "--iters", "60",
        "--burn-in", "10", "--particles", "8", "--seed", "4",
        "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    payload = json.loads(out.read_text())
    assert payload[0]["scenario"] == "S5"
    assert payload[0]["empty_graph_accuracy"] is not None
    assert "empty-graph accuracy" in result.output
