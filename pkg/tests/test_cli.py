import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from probetrace.cli import main


def run_json(capsys, argv):
    assert main(argv) == 0
    return json.loads(capsys.readouterr().out)


def test_color_outputs(tmp_path, capsys):
    out = tmp_path / "c.csv"
    summary = run_json(capsys, ["color", "path:10", "-d", "2", "--csv", str(out)])
    assert summary["m"] == 3 and summary["valid"] and summary["sizes"] == [4, 3, 3]
    rows = list(csv.DictReader(out.open()))
    assert [int(r["color"]) for r in rows] == [1, 2, 3, 1, 2, 3, 1, 2, 3, 1]


def test_color_lattice(capsys):
    summary = run_json(capsys, ["color", "lattice:6x6", "--coloring", "lattice:6x6", "-d", "1"])
    assert summary["m"] == 4 and summary["d"] == 1


def test_estimate_stochastic_reports_truth(capsys):
    rep = run_json(capsys, ["estimate", "lattice:8x8", "-f", "shifted-inverse:2", "--plan", "var-opt:0.01", "-d", "2"])
    assert rep["method"] == "stoch-probing"
    assert rep["quad_forms_used"] == sum(rep["counts"])
    assert rep["abs_error"] == pytest.approx(abs(rep["value"] - rep["true_trace"]))
    assert rep["value"] == pytest.approx(sum(rep["per_color_mean"]))


@pytest.mark.parametrize("method", ["det-probing", "hutchinson", "hutchpp"])
def test_estimate_methods(capsys, method):
    rep = run_json(capsys, ["estimate", "rgg:120", "-f", "exp-scale:10", "--method", method, "--budget", "30"])
    assert rep["method"] == method and np.isfinite(rep["value"])


def test_estimate_lanczos_matrix_file(tmp_path, capsys):
    p = tmp_path / "a.mtx"
    p.write_text("%%MatrixMarket matrix coordinate real symmetric\n3 3 5\n1 1 2\n2 1 -1\n2 2 2\n3 2 -1\n3 3 2\n")
    rep = run_json(capsys, ["estimate", str(p), "-f", "shifted-inverse:1", "--method", "det-probing",
                            "--qf", "lanczos:10:1e-12", "-d", "2"])
    assert rep["value"] == pytest.approx(rep["true_trace"], rel=1e-10)


def test_bounds_report(capsys):
    rep = run_json(capsys, ["bounds", "path:60", "-f", "shifted-inverse:2", "--coloring", "banded:1", "-d", "2"])
    assert rep["sign"]["d_star"] == 0
    assert rep["sign_predicate"]["basis"] == "analytic-predicate"
    assert rep["deterministic_bound"] == pytest.approx(2 * 60 * rep["E_d"])
    for pc in rep["per_color"]:
        assert pc["V_bound"] >= pc["V_exact"]
        assert pc["bound_kind"] in ("banded", "constant-sign")


def test_bounds_without_sign_hypothesis(capsys):
    rep = run_json(capsys, ["bounds", "rgg:80", "--operator", "adjacency", "-f", "abs", "-d", "1"])
    assert rep["sign_predicate"] is None
    assert all(pc["bound_kind"] == "none" and pc["V_bound"] is None for pc in rep["per_color"])


def test_experiment_command(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grid": [1, 2, 3], "graph": "path:50", "repetitions": 2}))
    assert main(["experiment", "--kind", "scaling-d", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "report.json").exists() and (tmp_path / "o" / "series.csv").exists()


def test_bad_input_exit_code(capsys):
    assert main(["estimate", "nowhere.txt", "-f", "abs"]) == 2
    assert "error" in capsys.readouterr().err


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "probetrace.cli", "color", "path:5", "-d", "1"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["m"] == 2
