"""CLI exit codes, determinism, artifact layout. Heavier end-to-end paths
use tiny presets so the whole module stays fast."""

import hashlib
import json
from pathlib import Path

import pytest

from firecast.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, run


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_usage_errors_exit_1():
    assert run([]) == EXIT_USAGE
    assert run(["simulate", "--seed", "1"]) == EXIT_USAGE  # missing --out
    assert run(["predict", "--data", "x", "--ckpt", "y"]) == EXIT_USAGE
    assert run(["train", "--data", "x"]) == EXIT_USAGE


def test_missing_seed_exits_2(tmp_path):
    assert run(["simulate", "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_selfcheck_passes():
    assert run(["selfcheck"]) == EXIT_OK


def test_simulate_deterministic_trees(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--seed", "7", "--count", "3", "--out", str(a)]) == EXIT_OK
    assert run(["simulate", "--seed", "7", "--count", "3", "--out", str(b)]) == EXIT_OK
    assert tree_digest(a) == tree_digest(b)


def test_simulate_seed_changes_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run(["simulate", "--seed", "7", "--count", "2", "--out", str(a)])
    run(["simulate", "--seed", "8", "--count", "2", "--out", str(b)])
    assert tree_digest(a) != tree_digest(b)


@pytest.fixture(scope="module")
def smoke_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    code = run(["smoke", "--seed", "3", "--count", "30", "--g-steps", "3",
                "--out", str(out)])
    assert code == EXIT_OK
    return out


def test_smoke_layout_and_report(smoke_out):
    assert (smoke_out / "report.json").exists()
    report = json.loads((smoke_out / "report.json").read_text())
    assert "persistence" in report["aggregates"]
    assert "cgan" in report["aggregates"]
    assert "ae" in report["aggregates"]
    for model in ("cgan", "persistence"):
        assert set(report["aggregates"][model]) == {"4h", "8h", "12h"}
    # every artifact dir records its resolved config
    for sub in ("scenarios", "run", "prediction", "evaluation"):
        assert (smoke_out / sub / "resolved_config.json").exists()


def test_smoke_three_rows_per_sample(smoke_out):
    lines = (smoke_out / "evaluation" / "metrics.csv").read_text().strip().splitlines()
    body = lines[1:]
    samples = {line.split(",")[0] for line in body}
    models = {line.split(",")[2] for line in body}
    assert len(body) == 3 * len(samples) * len(models)


def test_predict_default_ensemble_is_five(smoke_out, tmp_path):
    data = smoke_out / "scenarios"
    index = json.loads((data / "index.json").read_text())
    scenario = index["scenarios"][0]["dir"]
    out = tmp_path / "pred"
    code = run(["predict", "--seed", "1", "--data", str(data),
                "--ckpt", str(smoke_out / "run" / "ckpt_final"),
                "--scenario", scenario, "--out", str(out)])
    assert code == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_ensemble"] == 5
    assert len(summary["steps"]) == 3
    for name in ("mean_4h.pgm", "prob_4h.pgm", "mean_12h.pgm", "prob_12h.pgm"):
        assert (out / name).exists()


def test_predict_unknown_scenario_exits_2(smoke_out, tmp_path):
    code = run(["predict", "--seed", "1", "--data", str(smoke_out / "scenarios"),
                "--ckpt", str(smoke_out / "run" / "ckpt_final"),
                "--scenario", "scn_99999", "--out", str(tmp_path / "p")])
    assert code == EXIT_DATA


def test_evaluate_requires_some_checkpoint(smoke_out, tmp_path):
    code = run(["evaluate", "--seed", "1", "--data", str(smoke_out / "scenarios"),
                "--out", str(tmp_path / "e")])
    assert code == EXIT_USAGE
