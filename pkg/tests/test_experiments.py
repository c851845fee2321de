import json

import numpy as np
import pytest

from probetrace.experiments import (
    ExperimentConfig,
    fit_loglog_slope,
    load_graph,
    read_series_csv,
    run_compare,
    run_scaling_d,
    run_scaling_n,
    write_report,
)
from probetrace.matrix import path_graph


def small_n(**kw):
    base = dict(kind="scaling-n", grid=[60, 90, 120], repetitions=3, distance=2)
    base.update(kw)
    return ExperimentConfig(**base)


def test_slope_examples():
    xs = np.array([1.0, 2.0, 5.0, 10.0, 40.0])
    assert fit_loglog_slope(xs, xs)[0] == pytest.approx(1.0, abs=1e-12)
    assert fit_loglog_slope(xs, 3 * np.sqrt(xs))[0] == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        fit_loglog_slope([1, 2, 3], [1, 0, 2])
    with pytest.raises(ValueError):
        fit_loglog_slope([1, 2], [1, 2])


def test_slope_noisy_sqrt():
    rng = np.random.default_rng(0)
    xs = np.arange(100, 900, 100, dtype=float)
    hits = 0
    for _ in range(200):
        ys = 2.0 * np.sqrt(xs) * (1 + 0.05 * rng.standard_normal(xs.size))
        hits += 0.4 <= fit_loglog_slope(xs, ys)[0] <= 0.6
    assert hits == 200


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("scaling-x")
    with pytest.raises(ValueError):
        ExperimentConfig("scaling-n", grid=[100, 100, 200])
    with pytest.raises(ValueError):
        ExperimentConfig("scaling-n", repetitions=0)
    with pytest.raises(ValueError):
        ExperimentConfig("compare", budgets=[10, 5])


def test_scaling_n_deterministic_and_worker_independent():
    a = run_scaling_n(small_n(repetitions=1))
    b = run_scaling_n(small_n(repetitions=1))
    assert a.to_dict() == b.to_dict()
    c = run_scaling_n(small_n())
    d = run_scaling_n(small_n(workers=3))
    assert c.series == d.series and c.rows == d.rows


def test_scaling_n_rows_and_counts():
    rep = run_scaling_n(small_n())
    assert len(rep.rows) == 3 and len(rep.series) == 9
    for row in rep.rows:
        assert row["quad_forms_det"] == row["m"] == row["quad_forms_stoch1"]
        assert row["quad_forms_stochN"] >= row["m"]
        assert row["true_trace"] is not None
        assert row["n"] <= row["n_nominal"]
    assert set(rep.slopes) == {"det-probing", "stoch-probing-1", "stoch-probing-N"}


def test_report_roundtrip(tmp_path):
    rep = run_scaling_n(small_n())
    jpath, cpath = write_report(rep, tmp_path / "out")
    assert read_series_csv(cpath) == rep.series
    data = json.loads(jpath.read_text())
    assert data["kind"] == "scaling-n" and len(data["rows"]) == 3
    assert cpath.read_text().splitlines()[0] == "x,method,mean_abs_err,std_err,quad_forms"


def test_scaling_d_path_decays():
    cfg = ExperimentConfig("scaling-d", grid=[1, 2, 3, 4, 5, 6], graph="path:200", repetitions=5)
    rep = run_scaling_d(cfg)
    _, det = rep.method_series("det-probing")
    _, st1 = rep.method_series("stoch-probing-1")
    assert np.all(np.diff(np.log(det)) < 0)
    # geometric trend: log-error roughly linear in d
    assert np.polyfit(np.arange(1, 7), np.log(st1), 1)[0] < -0.5


def test_scaling_d_diameter_exact():
    cfg = ExperimentConfig("scaling-d", grid=[11], graph="path:12", repetitions=2)
    row = run_scaling_d(cfg).rows[0]
    assert row["m"] == 12
    assert row["det_err"] < 1e-12 and row["stoch1_mean_err"] < 1e-12


def test_compare_series_and_counts():
    cfg = ExperimentConfig("compare", graph="rgg:150", budgets=[30, 60], repetitions=3)
    rep = run_compare(cfg)
    methods = {p.method for p in rep.series}
    assert {"hutchinson", "hutchpp", "stoch-probing-d1", "stoch-probing-d3"} <= methods
    for p in rep.series:
        if p.method in ("hutchinson", "hutchpp"):
            assert p.quad_forms == p.x
        else:
            assert abs(p.quad_forms - p.x) <= 0.2 * p.x


def test_load_graph_files(tmp_path):
    el = tmp_path / "g.txt"
    el.write_text("# edges\n10 20\n20 30\n30 40\n99 100\n")
    A = load_graph(str(el))
    assert A.n == 4 and np.array_equal(A.to_dense(), path_graph(4).to_dense())
    mtx = tmp_path / "g.mtx"
    mtx.write_text("%%MatrixMarket matrix coordinate real symmetric\n4 4 4\n1 1 5\n2 1 1\n3 2 1\n4 4 1\n")
    A = load_graph(str(mtx))
    assert np.array_equal(A.to_dense(), path_graph(3).to_dense())
    with pytest.raises(FileNotFoundError):
        load_graph(str(tmp_path / "missing.mtx"))
    assert load_graph("lattice:3x4").n == 12
