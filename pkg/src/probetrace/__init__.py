"""Trace estimation for functions of sparse symmetric matrices by
graph-coloring probing, plain and stochastic."""

from .bounds import DecayModel, SignReport, chebyshev_Ed, constant_sign_predicate, dense_sign_scan, fit_decay
from .coloring import Coloring, banded_coloring, greedy_coloring, lattice_coloring, validate_coloring
from .estimators import (
    SamplePlan,
    TraceEstimate,
    allocate_budget_sqrt,
    allocate_tail_optimal,
    allocate_variance_optimal,
    deterministic_probing,
    exact_color_variances,
    hutchinson,
    hutchpp,
    stochastic_probing,
)
from .funcs import ScalarFunction, dense_matrix_function, parse_function, quadratic_form
from .matrix import SparseSymMatrix, load_matrix_market, random_geometric_graph

__version__ = "0.1.0"

__all__ = [
    "Coloring",
    "DecayModel",
    "SamplePlan",
    "ScalarFunction",
    "SignReport",
    "SparseSymMatrix",
    "TraceEstimate",
    "allocate_budget_sqrt",
    "allocate_tail_optimal",
    "allocate_variance_optimal",
    "banded_coloring",
    "chebyshev_Ed",
    "constant_sign_predicate",
    "dense_matrix_function",
    "dense_sign_scan",
    "deterministic_probing",
    "exact_color_variances",
    "fit_decay",
    "greedy_coloring",
    "hutchinson",
    "hutchpp",
    "lattice_coloring",
    "load_matrix_market",
    "parse_function",
    "quadratic_form",
    "random_geometric_graph",
    "stochastic_probing",
    "validate_coloring",
]
