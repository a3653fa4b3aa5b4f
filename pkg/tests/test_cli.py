import json
from pathlib import Path

import pytest

from randpush.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_ok(capsys):
    code, out, _ = run_cli(capsys, "validate", "--ensemble", CONFIGS / "ensembles/two_node.json")
    assert code == 0 and json.loads(out)["ok"] is True


def test_validate_bad_ensemble(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n": 2, "graphs": [[[1, 2]]], "probs": [0.7]}))
    code, out, _ = run_cli(capsys, "validate", "--ensemble", bad)
    report = json.loads(out)
    assert code == 1
    assert report["checks"]["probs_normalized"] is False
    assert report["checks"]["union_strongly_connected"] is False


def test_validate_config(capsys):
    code, out, _ = run_cli(capsys, "validate", "--config", CONFIGS / "median5.json")
    assert code == 0 and json.loads(out)["config_problems"] == []


def test_constants(capsys):
    code, out, _ = run_cli(capsys, "constants", "--ensemble", CONFIGS / "ensembles/two_node.json")
    c = json.loads(out)
    assert code == 0
    assert (c["B"], c["p"], c["delta"], c["c1"]) == (2, 0.25, 0.0625, 0.0078125)


def test_run_and_fit(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "run", "--config", CONFIGS / "median5.json", "--out", tmp_path,
                           "--trials", 2, "--horizon", 512, "--seed", 5)
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["metrics.csv", "summary.json"]
    header = (tmp_path / "metrics.csv").read_text().splitlines()[0]
    assert header == "trial,t,graph_id,gap_max,gap_mean,consensus_error,min_y,bound,ratio"
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["config"]["trials"] == 2 and summary["config"]["seed"] == 5

    code, out, _ = run_cli(capsys, "fit", tmp_path / "metrics.csv", "--window", 8, 512)
    fit = json.loads(out)
    assert code == 0 and fit["slope"] < 0 and fit["points"] >= 3


def test_run_single_format(capsys, tmp_path):
    code, _, _ = run_cli(capsys, "run", "--config", CONFIGS / "mpp5.json", "--out", tmp_path,
                         "--horizon", 50, "--format", "csv")
    assert code == 0 and [p.name for p in tmp_path.iterdir()] == ["metrics.csv"]


def test_machine_readable_error(capsys, tmp_path):
    code, _, err = run_cli(capsys, "run", "--config", CONFIGS / "median5.json", "--out", tmp_path,
                           "--gamma", 1.5)
    assert code == 2
    report = json.loads(err)
    assert report["error"] == "ConfigError" and "gamma" in report["message"]


def test_missing_file_error(capsys, tmp_path):
    code, _, err = run_cli(capsys, "constants", "--ensemble", tmp_path / "nope.json")
    assert code == 2 and "nope.json" in json.loads(err)["message"]


def test_fit_insufficient_points(capsys, tmp_path):
    csv_path = tmp_path / "m.csv"
    csv_path.write_text("trial,t,graph_id,gap_max,gap_mean,consensus_error,min_y,bound,ratio\n"
                        "mean,1,,1.0,1.0,0.0,1.0,,\n")
    code, _, err = run_cli(capsys, "fit", csv_path)
    assert code == 2 and json.loads(err)["error"] == "FitError"


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "randpush", "constants", "--ensemble",
                           str(CONFIGS / "ensembles/two_node.json")], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["B"] == 2
