"""Experiment drivers: error scaling in n and d, and estimator comparison.

Each driver returns a :class:`RunReport` whose ``series`` rows are written
to ``series.csv`` (columns ``x, method, mean_abs_err, std_err,
quad_forms``) and whose full content goes to ``report.json``.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import linregress

from .coloring import greedy_coloring
from .estimators import (
    allocate_budget_sqrt,
    deterministic_probing,
    hutchinson,
    hutchpp,
    stochastic_probing,
)
from .funcs import DENSE_CAP, QuadFormEngine, lanczos_quadrature, parse_function, parse_qf
from .matrix import (
    SparseSymMatrix,
    largest_component,
    laplacian_from_adjacency,
    lattice_graph,
    load_matrix_market,
    normalize_unit_trace,
    path_graph,
    random_geometric_graph,
)

__all__ = [
    "ExperimentConfig",
    "SeriesPoint",
    "RunReport",
    "build_operator",
    "load_graph",
    "fit_loglog_slope",
    "run_scaling_n",
    "run_scaling_d",
    "run_compare",
    "run_experiment",
    "write_report",
    "read_series_csv",
]

log = logging.getLogger(__name__)

KINDS = ("scaling-n", "scaling-d", "compare")
OPERATORS = ("laplacian", "adjacency", "normalized-laplacian")
SERIES_COLUMNS = ("x", "method", "mean_abs_err", "std_err", "quad_forms")


@dataclass
class ExperimentConfig:
    kind: str
    function: str = "shifted-inverse:2"
    operator: str = "laplacian"
    grid: list = field(default_factory=lambda: list(range(100, 801, 100)))
    distance: int = 3
    repetitions: int = 20
    budget_factor: int = 100
    seed: int = 0
    qf: str = "dense"
    graph: str = "rgg:500"
    budgets: list = field(default_factory=lambda: [60, 150, 300, 600])
    compare_distances: list = field(default_factory=lambda: [1, 3, 5])
    workers: int = 1
    dense_cap: int = DENSE_CAP
    exact_trace_lanczos: bool = False
    out: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.operator not in OPERATORS:
            raise ValueError(f"operator must be one of {OPERATORS}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        grid = self.budgets if self.kind == "compare" else self.grid
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grids must be strictly increasing")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls(**json.load(fh))


@dataclass
class SeriesPoint:
    x: float
    method: str
    mean_abs_err: float
    std_err: float
    quad_forms: int


@dataclass
class RunReport:
    kind: str
    config: dict
    rows: list = field(default_factory=list)
    series: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def method_series(self, method: str) -> tuple[np.ndarray, np.ndarray]:
        pts = [p for p in self.series if p.method == method]
        return np.array([p.x for p in pts]), np.array([p.mean_abs_err for p in pts])


def build_operator(adjacency: SparseSymMatrix, operator: str) -> SparseSymMatrix:
    if operator == "adjacency":
        return adjacency
    L = laplacian_from_adjacency(adjacency)
    return normalize_unit_trace(L) if operator == "normalized-laplacian" else L


def _read_edge_list(path) -> SparseSymMatrix:
    data = np.loadtxt(path, comments=("#", "%"), ndmin=2)
    labels, inv = np.unique(data[:, :2].astype(np.int64), return_inverse=True)
    edges = inv.reshape(-1, 2)
    weights = data[:, 2] if data.shape[1] > 2 else None
    return SparseSymMatrix.from_edges(labels.size, edges, weights)


def load_graph(spec: str, seed: int = 0) -> SparseSymMatrix:
    """Adjacency matrix from ``rgg:N[:radius]``, ``path:N``, ``lattice:AxB[x..]``,
    a Matrix Market file or a whitespace edge list. File graphs are reduced
    to their largest connected component and lose their diagonal.
    """
    kind, _, rest = spec.partition(":")
    if kind == "rgg":
        parts = rest.split(":")
        radius = float(parts[1]) if len(parts) > 1 else None
        return random_geometric_graph(int(parts[0]), radius, seed)
    if kind == "path":
        return path_graph(int(rest))
    if kind == "lattice":
        return lattice_graph([int(t) for t in rest.lower().split("x")])
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"no such graph file or generator: {spec}")
    if path.suffix == ".mtx":
        M = load_matrix_market(path)
        A = SparseSymMatrix.from_scipy(M.graph.multiply(M.to_scipy()))
    else:
        A = _read_edge_list(path)
    return largest_component(A)[0]


def fit_loglog_slope(xs, ys) -> tuple[float, float]:
    """Least-squares slope of ``log y`` against ``log x`` and its standard error."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size < 3 or xs.size != ys.size:
        raise ValueError("need at least three (x, y) points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit needs positive values")
    res = linregress(np.log(xs), np.log(ys))
    return float(res.slope), float(res.stderr)


class _Problem:
    """Operator, engine and reference trace for one matrix/function pair."""

    def __init__(self, M: SparseSymMatrix, config: ExperimentConfig):
        self.M = M
        self.f = parse_function(config.function)
        qf = parse_qf(config.qf)
        self.flags = []
        if qf.kind == "dense" and M.n > config.dense_cap:
            self.flags.append(f"n={M.n} above dense cap; using Lanczos quadratic forms")
            qf = parse_qf("lanczos:100:1e-10")
        self.engine = QuadFormEngine(M, self.f, qf, cap=config.dense_cap)
        self.true_trace = self._reference_trace(config)

    def _reference_trace(self, config) -> float | None:
        if self.engine.F is not None:
            return float(np.trace(self.engine.F))
        if self.M.n <= config.dense_cap:
            return float(np.trace(QuadFormEngine(self.M, self.f, "dense", config.dense_cap).F))
        if config.exact_trace_lanczos:
            e = np.zeros(self.M.n)
            total = 0.0
            for i in range(self.M.n):
                e[i] = 1.0
                total += lanczos_quadrature(self.M, self.f, e, 200, 1e-13).value
                e[i] = 0.0
            return total
        self.flags.append(f"n={self.M.n}: reference trace omitted")
        return None


def _errors(values, truth, relative=False):
    if truth is None:
        return np.full(len(values), np.nan)
    err = np.abs(np.asarray(values) - truth)
    return err / abs(truth) if relative else err


def _repeat(fn, seeds, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, seeds))
    return [fn(s) for s in seeds]


def _three_methods(prob: _Problem, coloring, config, relative) -> dict:
    # deterministic probing, one Rademacher sample per color, budget_factor*m samples
    eng = prob.engine
    det = deterministic_probing(prob.M, prob.f, coloring, engine=eng)
    plan = allocate_budget_sqrt(coloring.sizes, config.budget_factor * coloring.m)
    seeds = [config.seed * 100003 + r for r in range(config.repetitions)]
    one = _repeat(lambda s: stochastic_probing(prob.M, prob.f, coloring, 1, seed=s, engine=eng).value,
                  seeds, config.workers)
    many = _repeat(lambda s: stochastic_probing(prob.M, prob.f, coloring, plan, seed=s, engine=eng).value,
                   seeds, config.workers)
    e_det = float(_errors([det.value], prob.true_trace, relative)[0])
    e_one = _errors(one, prob.true_trace, relative)
    e_many = _errors(many, prob.true_trace, relative)
    return {
        "m": coloring.m,
        "true_trace": prob.true_trace,
        "det_value": det.value,
        "det_err": e_det,
        "stoch1_mean_err": float(e_one.mean()),
        "stoch1_std_err": float(e_one.std(ddof=1)) if e_one.size > 1 else 0.0,
        "stochN_mean_err": float(e_many.mean()),
        "stochN_std_err": float(e_many.std(ddof=1)) if e_many.size > 1 else 0.0,
        "quad_forms_det": coloring.m,
        "quad_forms_stoch1": coloring.m,
        "quad_forms_stochN": plan.total,
    }


def _series_from_row(x, row) -> list[SeriesPoint]:
    return [
        SeriesPoint(x, "det-probing", row["det_err"], 0.0, row["quad_forms_det"]),
        SeriesPoint(x, "stoch-probing-1", row["stoch1_mean_err"], row["stoch1_std_err"],
                    row["quad_forms_stoch1"]),
        SeriesPoint(x, "stoch-probing-N", row["stochN_mean_err"], row["stochN_std_err"],
                    row["quad_forms_stochN"]),
    ]


def run_scaling_n(config: ExperimentConfig) -> RunReport:
    """Errors of the three probing variants on random geometric graphs of growing size.

    The x value of each row is the size of the largest component actually
    used. Slopes of log(error) against log(n) are fitted per method.
    """
    report = RunReport("scaling-n", asdict(config))
    for n_nominal in config.grid:
        A = random_geometric_graph(int(n_nominal), seed=config.seed * 7919 + int(n_nominal))
        M = build_operator(A, config.operator)
        prob = _Problem(M, config)
        report.flags.extend(prob.flags)
        coloring = greedy_coloring(M, config.distance)
        row = {"n_nominal": int(n_nominal), "n": M.n, **_three_methods(prob, coloring, config, False)}
        report.rows.append(row)
        report.series.extend(_series_from_row(M.n, row))
        log.info("scaling-n: n=%d m=%d det=%.3e stoch1=%.3e", M.n, coloring.m, row["det_err"],
                 row["stoch1_mean_err"])
    _fit_slopes(report)
    return report


def _fit_slopes(report: RunReport):
    for method in ("det-probing", "stoch-probing-1", "stoch-probing-N"):
        xs, ys = report.method_series(method)
        ok = np.isfinite(ys) & (ys > 0)
        if ok.sum() >= 3:
            slope, stderr = fit_loglog_slope(xs[ok], ys[ok])
            report.slopes[method] = {"slope": slope, "stderr": stderr}


def run_scaling_d(config: ExperimentConfig) -> RunReport:
    """Relative errors of the three probing variants on one graph for each d in the grid."""
    report = RunReport("scaling-d", asdict(config))
    A = load_graph(config.graph, config.seed)
    M = build_operator(A, config.operator)
    prob = _Problem(M, config)
    report.flags.extend(prob.flags)
    for d in config.grid:
        coloring = greedy_coloring(M, int(d))
        row = {"d": int(d), "n": M.n, **_three_methods(prob, coloring, config, True)}
        report.rows.append(row)
        report.series.extend(_series_from_row(int(d), row))
    return report


def run_compare(config: ExperimentConfig) -> RunReport:
    """Mean absolute error against the number of quadratic forms for Hutchinson,
    Hutch++ and stochastic probing at several coloring distances."""
    report = RunReport("compare", asdict(config))
    A = load_graph(config.graph, config.seed)
    M = build_operator(A, config.operator)
    prob = _Problem(M, config)
    report.flags.extend(prob.flags)
    eng = prob.engine
    colorings = {d: greedy_coloring(M, int(d)) for d in config.compare_distances}
    seeds = [config.seed * 100003 + r for r in range(config.repetitions)]
    for budget in config.budgets:
        runners = {
            "hutchinson": lambda s, b=budget: hutchinson(M, prob.f, b, seed=s, engine=eng),
            "hutchpp": lambda s, b=budget: hutchpp(M, prob.f, b, seed=s, engine=eng),
        }
        if budget < 3:
            del runners["hutchpp"]
        for d, col in colorings.items():
            if budget >= col.m:
                plan = allocate_budget_sqrt(col.sizes, budget)
                runners[f"stoch-probing-d{d}"] = (
                    lambda s, c=col, p=plan: stochastic_probing(M, prob.f, c, p, seed=s, engine=eng)
                )
        for method, run in runners.items():
            ests = _repeat(run, seeds, config.workers)
            err = _errors([e.value for e in ests], prob.true_trace)
            qf = int(round(np.mean([e.quad_forms_used for e in ests])))
            point = SeriesPoint(budget, method, float(err.mean()),
                                float(err.std(ddof=1)) if err.size > 1 else 0.0, qf)
            report.series.append(point)
            report.rows.append({"budget": budget, **asdict(point)})
    return report


def run_experiment(config: ExperimentConfig) -> RunReport:
    return {"scaling-n": run_scaling_n, "scaling-d": run_scaling_d, "compare": run_compare}[
        config.kind
    ](config)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def write_report(report: RunReport, outdir) -> tuple[Path, Path]:
    """Write ``report.json`` and ``series.csv`` into ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    jpath = outdir / "report.json"
    cpath = outdir / "series.csv"
    with open(jpath, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, default=_json_default)
    with open(cpath, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SERIES_COLUMNS)
        for p in report.series:
            writer.writerow([repr(float(p.x)), p.method, repr(float(p.mean_abs_err)),
                             repr(float(p.std_err)), p.quad_forms])
    return jpath, cpath


def read_series_csv(path) -> list[SeriesPoint]:
    with open(path, newline="") as fh:
        return [
            SeriesPoint(float(r["x"]), r["method"], float(r["mean_abs_err"]), float(r["std_err"]),
                        int(r["quad_forms"]))
            for r in csv.DictReader(fh)
        ]
