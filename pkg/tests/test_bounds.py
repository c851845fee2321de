import math

import mpmath
import numpy as np
import pytest
from numpy.polynomial import chebyshev as C
from scipy.optimize import linprog

from probetrace.bounds import (
    DecayModel,
    banded_error_bound,
    banded_Vl_bound,
    chebyshev_Ed,
    constant_sign_predicate,
    constsign_Vl_bound,
    dense_sign_scan,
    deterministic_error_bound,
    fit_decay,
    is_m_matrix,
    lattice_error_bound,
    lattice_Vl_bound,
    m_matrix_theta,
    polylog_nonpos,
)
from probetrace.coloring import banded_coloring, greedy_coloring, lattice_coloring
from probetrace.estimators import deterministic_probing, exact_color_variances
from probetrace.funcs import DomainError, ScalarFunction, dense_matrix_function, parse_function, spectral_interval
from probetrace.matrix import (
    SparseSymMatrix,
    all_pairs_distances,
    laplacian_from_adjacency,
    lattice_graph,
    normalize_unit_trace,
    path_graph,
    random_geometric_graph,
)


def remez_grid(f, a, b, d, K=3000):
    # minimax polynomial on a fine grid as an LP: min t s.t. |f - p| <= t
    x = 0.5 * (a + b) + 0.5 * (b - a) * np.cos(np.pi * np.arange(K) / (K - 1))
    T = C.chebvander((2 * x - a - b) / (b - a), d)
    fx = f(x)
    ones = np.ones((K, 1))
    A = np.vstack([np.hstack([T, -ones]), np.hstack([-T, -ones])])
    rhs = np.concatenate([fx, -fx])
    cost = np.zeros(d + 2)
    cost[-1] = 1
    res = linprog(cost, A_ub=A, b_ub=rhs, bounds=[(None, None)] * (d + 1) + [(0, None)], method="highs")
    assert res.status == 0
    return res.x[-1]


def scaled(M, s):
    return SparseSymMatrix.from_scipy(M.to_scipy() * s)


def path_laplacian(n):
    return laplacian_from_adjacency(path_graph(n))


def test_polylog_examples():
    assert polylog_nonpos(0, 0.5) == pytest.approx(1.0, rel=1e-15)
    assert polylog_nonpos(-1, 0.5) == pytest.approx(2.0, rel=1e-15)
    assert polylog_nonpos(-2, 0.5) == pytest.approx(6.0, rel=1e-15)
    assert polylog_nonpos(-3, 0.5) == pytest.approx(26.0, rel=1e-15)


@pytest.mark.parametrize("order", [0, -1, -2, -3, -4, -6])
@pytest.mark.parametrize("z", [0.01, 0.2, 0.5, 0.75, 0.9, 0.99])
def test_polylog_against_mpmath(order, z):
    assert polylog_nonpos(order, z) == pytest.approx(float(mpmath.polylog(order, z)), rel=1e-13)


@pytest.mark.parametrize("order", [0, -1, -2, -3])
@pytest.mark.parametrize("z", [0.1, 0.3, 0.5])
def test_polylog_closed_forms_against_series(order, z):
    series = math.fsum(z**k * k ** (-order) for k in range(1, 201))
    assert polylog_nonpos(order, z) == pytest.approx(series, rel=1e-12)


def test_polylog_domain():
    for z in (0.0, 1.0, -0.5):
        with pytest.raises(ValueError):
            polylog_nonpos(-1, z)


def test_banded_and_lattice_bound_arithmetic():
    m = DecayModel(1.0, 0.5)
    assert banded_Vl_bound(3, m, 1) == pytest.approx(4.0)
    ratio = banded_Vl_bound(3, m, 2) / banded_Vl_bound(3, m, 1)
    assert ratio == pytest.approx((0.0625 / 0.9375) / (0.25 / 0.75))
    assert banded_Vl_bound(3, DecayModel(1.0, 0.0), 1) == 0.0
    assert lattice_Vl_bound(7, DecayModel(2.0, 0.8), 2, 1) == pytest.approx(banded_Vl_bound(7, DecayModel(2.0, 0.8), 2))
    assert lattice_Vl_bound(10, m, 1, 2) == pytest.approx(80 * 0.25 / 0.5625)
    assert constsign_Vl_bound(5, 0.1) == pytest.approx(0.2)
    assert constsign_Vl_bound(5, 0.0) == 0.0
    assert deterministic_error_bound(100, 0.01) == pytest.approx(2.0)
    assert deterministic_error_bound(100, 0.0) == 0.0


def test_chebyshev_Ed_examples():
    lin = ScalarFunction("polynomial", (3.0, -2.0))
    assert chebyshev_Ed(lin, (-1, 4), 1) <= 1e-14
    sq = ScalarFunction("polynomial", (0.0, 0.0, 1.0))
    assert chebyshev_Ed(sq, (-1, 1), 1) == pytest.approx(0.5, rel=1e-13)
    assert chebyshev_Ed(sq, (-1, 1), 2) <= 1e-14


def test_chebyshev_Ed_against_grid_remez():
    f = ScalarFunction("exp-scale", (-1.0,))
    E = remez_grid(f, -1.0, 1.0, 5)
    cheb = chebyshev_Ed(f, (-1.0, 1.0), 5)
    assert E * (1 - 1e-9) <= cheb <= 2 * E


@pytest.mark.parametrize("spec, a, b", [("shifted-inverse:2", 0, 4), ("exp-scale:10", 0, 8), ("entropy", 0, 1), ("abs", -3, 3)])
def test_chebyshev_Ed_bounds_remez_and_monotone(spec, a, b):
    f = parse_function(spec)
    vals = [chebyshev_Ed(f, (a, b), d) for d in range(1, 9)]
    assert all(y <= x * (1 + 1e-9) for x, y in zip(vals, vals[1:]))
    for d in (2, 5):
        assert chebyshev_Ed(f, (a, b), d) >= remez_grid(f, a, b, d) * (1 - 1e-9)


def test_chebyshev_Ed_domain_error():
    with pytest.raises(DomainError):
        chebyshev_Ed(parse_function("shifted-inverse:1"), (-2, 0), 3)


def test_fit_decay_recovers_planted_model():
    n, c, q = 30, 3.0, 0.6
    dist = all_pairs_distances(path_graph(n))
    F = c * q ** dist.astype(float)
    model = fit_decay(F=F, dist=dist)
    assert model.c == pytest.approx(c, rel=0.01) and model.q == pytest.approx(q, rel=0.01)
    assert not model.sampled


def test_fit_decay_diagonal_is_degenerate():
    dist = all_pairs_distances(path_graph(5))
    model = fit_decay(F=np.diag(np.arange(1.0, 6.0)), dist=dist)
    assert model.degenerate and model.q == 0.0


@pytest.mark.parametrize("budget", [50, 100000])
def test_fit_decay_holds_on_pairs(budget):
    L = laplacian_from_adjacency(random_geometric_graph(120, seed=1))
    f = parse_function("shifted-inverse:2")
    F = dense_matrix_function(L, f)
    dist = all_pairs_distances(L)
    model = fit_decay(L, f, budget, F=F, dist=dist)
    assert 0 < model.q < 1
    assert model.sampled == (budget == 50)
    if not model.sampled:
        iu = np.triu_indices(L.n, 1)
        ok = dist[iu] >= 1
        assert np.all(np.abs(F[iu][ok]) <= model(dist[iu][ok]) * (1 + 1e-12))


def test_is_m_matrix_examples():
    assert is_m_matrix(laplacian_from_adjacency(random_geometric_graph(60, seed=2)))
    assert not is_m_matrix(SparseSymMatrix.from_dense(np.array([[1.0, 0.5], [0.5, 1.0]])))
    assert not is_m_matrix(SparseSymMatrix.from_dense(np.array([[1.0, -2.0], [-2.0, 1.0]])))
    assert is_m_matrix(laplacian_from_adjacency(path_graph(50)), cap=10)
    assert m_matrix_theta(path_laplacian(5)) == 2.0


def test_predicate_table_examples():
    assert constant_sign_predicate(parse_function("shifted-inverse:2"), 4.0).to_dict() == {
        "d_star": 0, "sign": "nonnegative", "basis": "analytic-predicate"}
    r = constant_sign_predicate(parse_function("entropy"), 0.2)
    assert (r.d_star, r.sign) == (1, "nonpositive")
    r = constant_sign_predicate(parse_function("entropy"), 1.0)
    assert (r.d_star, r.sign) == (2, "nonpositive")
    r = constant_sign_predicate(parse_function("power:2.5"), 2.0)
    assert (r.d_star, r.sign) == (3, "nonpositive")
    r = constant_sign_predicate(parse_function("power:0.5"), 2.0)
    assert (r.d_star, r.sign) == (1, "nonpositive")
    assert constant_sign_predicate(parse_function("abs"), 2.0) is None


def sign_instances():
    P = path_laplacian(40)
    R = laplacian_from_adjacency(random_geometric_graph(150, seed=7))
    G = laplacian_from_adjacency(lattice_graph([8, 8]))
    shiftI = lambda M: SparseSymMatrix.from_scipy(M.to_scipy() + np.eye(M.n))
    return [
        ("shifted-inverse:2", R),
        ("exp-scale:10", P),
        ("exp-scale:0.5", G),
        ("entropy", normalize_unit_trace(R)),
        ("entropy", scaled(P, 0.5)),
        ("entropy", scaled(G, 0.1)),
        ("power:0.5", P),
        ("power:0.5", G),
        ("power:2", G),
        ("power:2.5", P),
        ("power:3.5", G),
        ("power:-0.5", shiftI(P)),
        ("identity", R),
        ("x-exp", scaled(P, 0.5)),
        ("x-exp", scaled(P, 0.75)),
        ("x-exp", scaled(G, 0.5)),
        ("x-exp", scaled(P, 1.5)),
        ("x-exp", scaled(G, 1.0)),
        ("x-exp", scaled(P, 2.25)),
    ]


@pytest.mark.parametrize("k", range(len(sign_instances())))
def test_predicate_confirmed_by_dense_scan(k):
    spec, M = sign_instances()[k]
    assert is_m_matrix(M)
    f = parse_function(spec)
    pred = constant_sign_predicate(f, m_matrix_theta(M))
    F = dense_matrix_function(M, f)
    dist = all_pairs_distances(M)
    scan = dense_sign_scan(F, dist)
    assert scan.d_star is not None and scan.d_star <= pred.d_star
    tail = F[dist >= pred.d_star]
    if pred.sign == "nonnegative":
        assert tail.min() >= -1e-12
    else:
        assert tail.max() <= 1e-12


def test_dense_sign_scan_examples():
    P = path_laplacian(30)
    dist = all_pairs_distances(P)
    assert dense_sign_scan(np.abs(np.random.default_rng(0).standard_normal((30, 30))), dist).d_star == 0
    r = dense_sign_scan(dense_matrix_function(P, parse_function("exp-scale:10")), dist)
    assert (r.d_star, r.sign, r.basis) == (0, "nonnegative", "dense-scan")

    # graph energy: no constant-sign tail short of the graph diameter
    seen_none = False
    for n, seed in [(100, 0), (100, 1), (200, 0), (200, 2)]:
        A = random_geometric_graph(n, seed=seed)
        dist = all_pairs_distances(A)
        r = dense_sign_scan(dense_matrix_function(A, parse_function("abs")), dist)
        assert r.d_star is None or r.d_star >= dist.max() - 1
        seen_none |= r.d_star is None and r.sign is None
    assert seen_none


def test_dense_sign_scan_levels():
    dist = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    F = np.array([[1.0, -1.0, 0.5], [-1.0, 1.0, -1.0], [0.5, -1.0, 1.0]])
    # distance >= 1 mixes signs; distance >= 2 only holds 0.5
    assert dense_sign_scan(F, dist).to_dict() == {"d_star": 2, "sign": "nonnegative", "basis": "dense-scan"}
    F[0, 2] = F[2, 0] = 1e-13
    assert dense_sign_scan(F, dist).d_star == 1


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("spec", ["shifted-inverse:2", "exp-scale:10"])
def test_banded_bound_dominates_exact(d, spec):
    P = path_laplacian(100)
    f = parse_function(spec)
    F = dense_matrix_function(P, f)
    model = fit_decay(F=F, dist=all_pairs_distances(P))
    col = banded_coloring(100, 1, d)
    V = exact_color_variances(P, f, col, F=F).V
    bounds = [banded_Vl_bound(n_l, model, d) for n_l in col.sizes]
    assert np.all(np.array(bounds) >= V)
    err = abs(deterministic_probing(P, f, col).value - np.trace(F))
    assert banded_error_bound(100, model, d) >= err


@pytest.mark.parametrize("d", [1, 2, 3])
def test_lattice_bound_dominates_exact(d):
    G = laplacian_from_adjacency(lattice_graph([10, 10]))
    f = parse_function("shifted-inverse:2")
    F = dense_matrix_function(G, f)
    model = fit_decay(F=F, dist=all_pairs_distances(G))
    col = lattice_coloring([10, 10], d)
    V = exact_color_variances(G, f, col, F=F).V
    assert all(lattice_Vl_bound(n_l, model, d, 2) >= v for n_l, v in zip(col.sizes, V))
    err = abs(deterministic_probing(G, f, col).value - np.trace(F))
    assert lattice_error_bound(100, model, d, 2) >= err


@pytest.mark.parametrize("spec", ["shifted-inverse:2", "exp-scale:1", "entropy"])
def test_constsign_and_deterministic_bounds_dominate(spec):
    P = path_laplacian(60)
    f = parse_function(spec)
    F = dense_matrix_function(P, f)
    d = 2
    interval = spectral_interval(P)
    E = chebyshev_Ed(f, interval, d)
    col = greedy_coloring(P, d)
    scan = dense_sign_scan(F, all_pairs_distances(P))
    assert scan.d_star <= d + 1
    V = exact_color_variances(P, f, col, F=F).V
    assert all(constsign_Vl_bound(n_l, E) >= v for n_l, v in zip(col.sizes, V))
    err = abs(deterministic_probing(P, f, col).value - np.trace(F))
    assert deterministic_error_bound(P.n, E) >= err


def test_x_exp_tail_is_nonpositive_for_odd_ceiling():
    # theta = 3: a parity-based rule would predict a nonnegative tail
    M = scaled(path_laplacian(40), 1.5)
    F = dense_matrix_function(M, parse_function("x-exp"))
    tail = F[all_pairs_distances(M) >= 3]
    assert tail.min() < -1e-6 and tail.max() <= 1e-12
