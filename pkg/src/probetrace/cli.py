"""Command-line interface: ``probetrace color|estimate|bounds|experiment``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bounds import (
    DecayModel,
    banded_Vl_bound,
    chebyshev_Ed,
    constant_sign_predicate,
    constsign_Vl_bound,
    dense_sign_scan,
    deterministic_error_bound,
    fit_decay,
    is_m_matrix,
    lattice_Vl_bound,
    m_matrix_theta,
)
from .coloring import Coloring, banded_coloring, greedy_coloring, lattice_coloring, validate_coloring
from .estimators import (
    deterministic_probing,
    exact_color_variances,
    hutchinson,
    hutchpp,
    make_plan,
    stochastic_probing,
)
from .experiments import ExperimentConfig, build_operator, load_graph, run_experiment, write_report
from .funcs import DENSE_CAP, QuadFormEngine, parse_function, parse_qf, spectral_interval
from .matrix import SparseSymMatrix, all_pairs_distances, load_matrix_market

log = logging.getLogger("probetrace")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def _emit(payload: dict, path: str | None):
    text = json.dumps(payload, indent=2, default=_json_default)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _load_input(args) -> SparseSymMatrix:
    # .mtx files are used as given unless --operator asks for a graph operator
    src = args.input
    if src.endswith(".mtx") and args.operator == "as-is":
        return load_matrix_market(src)
    if args.operator == "as-is":
        raise SystemExit("generated graphs need --operator laplacian|adjacency|normalized-laplacian")
    return build_operator(load_graph(src, args.graph_seed), args.operator)


def _coloring(M: SparseSymMatrix, spec: str, d: int) -> Coloring:
    kind, _, rest = spec.partition(":")
    if kind == "greedy":
        return greedy_coloring(M, d)
    if kind == "banded":
        return banded_coloring(M.n, int(rest or 1), d)
    if kind == "lattice":
        return lattice_coloring([int(t) for t in rest.lower().split("x")], d)
    raise SystemExit(f"unknown coloring '{spec}'")


def _add_matrix_args(p: argparse.ArgumentParser):
    p.add_argument("input", help="Matrix Market file, edge list, or rgg:N | path:N | lattice:AxB")
    p.add_argument("--operator", default=None,
                   choices=["as-is", "laplacian", "adjacency", "normalized-laplacian"],
                   help="default: as-is for .mtx files, laplacian otherwise")
    p.add_argument("--graph-seed", type=int, default=0, help="seed for generated graphs")
    p.add_argument("--distance", "-d", type=int, default=3)
    p.add_argument("--coloring", default="greedy", help="greedy | banded:BETA | lattice:AxB")
    p.add_argument("--out", "-o", default=None, help="JSON output path (default: stdout)")


def cmd_color(args) -> int:
    M = _load_input(args)
    col = _coloring(M, args.coloring, args.distance)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "color"])
            w.writerows(enumerate(col.assignment.tolist()))
    violations = validate_coloring(M, col)
    _emit({"n": M.n, "m": col.m, "sizes": col.sizes, "d": col.distance,
           "valid": not violations, "violations": violations[:20]}, args.out)
    return 0 if not violations else 1


def cmd_estimate(args) -> int:
    M = _load_input(args)
    f = parse_function(args.function)
    qf = parse_qf(args.qf)
    dense_ok = M.n <= args.dense_cap
    engine = QuadFormEngine(M, f, qf, cap=args.dense_cap)
    F = engine.F if engine.F is not None else (
        QuadFormEngine(M, f, "dense", args.dense_cap).F if dense_ok else None)
    if args.method == "hutchinson":
        est = hutchinson(M, f, args.budget, args.distribution, args.seed, engine=engine)
    elif args.method == "hutchpp":
        est = hutchpp(M, f, args.budget, args.seed, distribution=args.distribution, engine=engine)
    else:
        col = _coloring(M, args.coloring, args.distance)
        if args.method == "det-probing":
            est = deterministic_probing(M, f, col, engine=engine)
        else:
            V = None
            if args.plan.startswith(("var-opt", "tail-opt")):
                if F is None:
                    raise SystemExit("optimal plans need exact variances; raise --dense-cap")
                # tail-opt is calibrated on Rademacher variances
                dist = "rademacher" if args.plan.startswith("tail-opt") else args.distribution
                V = exact_color_variances(M, f, col, dist, F=F)
            plan = make_plan(args.plan, col, V)
            est = stochastic_probing(M, f, col, plan, args.distribution, args.seed,
                                     engine=engine, workers=args.workers)
    report = {"function": f.name, "n": M.n, **est.to_dict()}
    if F is not None:
        truth = float(np.trace(F))
        report.update(true_trace=truth, abs_error=abs(est.value - truth),
                      rel_error=abs(est.value - truth) / abs(truth) if truth else None)
    _emit(report, args.out)
    return 0


def cmd_bounds(args) -> int:
    M = _load_input(args)
    if M.n > args.dense_cap:
        raise SystemExit(f"bounds need the dense f(A); n={M.n} exceeds --dense-cap")
    f = parse_function(args.function)
    col = _coloring(M, args.coloring, args.distance)
    d = args.distance
    F = QuadFormEngine(M, f, "dense", args.dense_cap).F
    dist = all_pairs_distances(M)
    if args.decay:
        c, q = (float(t) for t in args.decay.split(","))
        model = DecayModel(c, q, "user")
    else:
        model = fit_decay(F=F, dist=dist, seed=args.seed)
    interval = spectral_interval(M, "exact-dense")
    E_d = chebyshev_Ed(f, interval, d)
    sign = dense_sign_scan(F, dist)
    basis = sign
    if is_m_matrix(M):
        pred = constant_sign_predicate(f, m_matrix_theta(M))
        if pred is not None:
            basis = pred
    sign_ok = basis.d_star is not None and basis.d_star <= d + 1
    V = exact_color_variances(M, f, col, "rademacher", F=F).V
    kind = args.coloring.partition(":")[0]
    per_color = []
    for n_l, v in zip(col.sizes.tolist(), V.tolist()):
        bounds = {}
        if kind == "banded":
            bounds["banded"] = banded_Vl_bound(n_l, model, d)
        elif kind == "lattice":
            D = len(args.coloring.partition(":")[2].split("x"))
            bounds["lattice"] = lattice_Vl_bound(n_l, model, d, D)
        if sign_ok:
            bounds["constant-sign"] = constsign_Vl_bound(n_l, E_d)
        best = min(bounds, key=bounds.get) if bounds else None
        per_color.append({"n_l": n_l, "V_exact": v, "V_bound": bounds.get(best),
                          "bound_kind": best or "none"})
    _emit({
        "function": f.name,
        "n": M.n,
        "d": d,
        "m": col.m,
        "model": {"c": model.c, "q": model.q, "source": model.source,
                  "basis": "sampled-decay" if model.sampled else "all-pairs"},
        "interval": [interval.a, interval.b],
        "E_d": E_d,
        "deterministic_bound": deterministic_error_bound(M.n, E_d),
        "sign": sign.to_dict(),
        "sign_predicate": basis.to_dict() if basis is not sign else None,
        "per_color": per_color,
    }, args.out)
    return 0


def cmd_experiment(args) -> int:
    raw = json.loads(Path(args.config).read_text()) if args.config else {}
    raw["kind"] = args.kind
    if args.workers is not None:
        raw["workers"] = args.workers
    config = ExperimentConfig(**raw)
    report = run_experiment(config)
    jpath, cpath = write_report(report, args.out)
    for flag in report.flags:
        log.warning(flag)
    print(f"wrote {jpath} and {cpath}")
    for method, s in report.slopes.items():
        print(f"{method}: slope {s['slope']:.3f} +/- {s['stderr']:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probetrace", description="Trace estimation by graph-coloring probing.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("color", help="compute and validate a distance-d coloring")
    _add_matrix_args(p)
    p.add_argument("--csv", default=None, help="write node,color assignment here")
    p.set_defaults(func=cmd_color)

    p = sub.add_parser("estimate", help="estimate trace(f(A))")
    _add_matrix_args(p)
    p.add_argument("--function", "-f", required=True)
    p.add_argument("--method", default="stoch-probing",
                   choices=["det-probing", "stoch-probing", "hutchinson", "hutchpp"])
    p.add_argument("--distribution", default="rademacher", choices=["rademacher", "gaussian"])
    p.add_argument("--plan", default="uniform:1",
                   help="uniform:N | budget:N | var-opt:EPS | tail-opt:EPS:DELTA | manual:N1,N2,...")
    p.add_argument("--budget", type=int, default=100, help="quadratic forms for hutchinson/hutchpp")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--qf", default="dense", help="dense | lanczos:K:TOL")
    p.add_argument("--dense-cap", type=int, default=DENSE_CAP)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bounds", help="a priori variance and error bounds")
    _add_matrix_args(p)
    p.add_argument("--function", "-f", required=True)
    p.add_argument("--decay", default=None, help="C,Q decay model; fitted when omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dense-cap", type=int, default=DENSE_CAP)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("experiment", help="run a scaling or comparison study")
    p.add_argument("--kind", required=True, choices=["scaling-n", "scaling-d", "compare"])
    p.add_argument("--config", default=None, help="JSON file with ExperimentConfig fields")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "operator", "") is None:
        args.operator = "as-is" if args.input.endswith(".mtx") else "laplacian"
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"probetrace: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
