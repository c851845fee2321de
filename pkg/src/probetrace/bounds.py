"""A priori bounds on probing errors and per-color variances, and sign-pattern
tools for functions of symmetric M-matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import Chebyshev

from .funcs import DENSE_CAP, DomainError, ScalarFunction, dense_matrix_function
from .matrix import UNREACHED, SparseSymMatrix, all_pairs_distances

__all__ = [
    "DecayModel",
    "SignReport",
    "polylog_nonpos",
    "banded_Vl_bound",
    "lattice_Vl_bound",
    "constsign_Vl_bound",
    "deterministic_error_bound",
    "banded_error_bound",
    "lattice_error_bound",
    "chebyshev_Ed",
    "fit_decay",
    "is_m_matrix",
    "m_matrix_theta",
    "constant_sign_predicate",
    "dense_sign_scan",
    "SIGN_TOL",
]

SIGN_TOL = 1e-12


@dataclass(frozen=True)
class DecayModel:
    """Entrywise decay ``|f(A)_ij| <= c * q**dist(i, j)``.

    ``sampled`` marks a fitted model that was only checked on a subset of
    the pairs.
    """

    c: float
    q: float
    source: str = "user"
    sampled: bool = False

    @property
    def degenerate(self) -> bool:
        return self.c == 0.0

    def __call__(self, dist):
        return self.c * np.power(self.q, dist)


@dataclass(frozen=True)
class SignReport:
    """Entries at distance ``>= d_star`` share ``sign``; ``d_star`` is None
    when no nonempty tail has constant sign."""

    d_star: int | None
    sign: str | None
    basis: str

    def to_dict(self):
        return {"d_star": self.d_star, "sign": self.sign, "basis": self.basis}


def polylog_nonpos(order: int, z: float) -> float:
    """Polylogarithm ``Li_order(z) = sum_k z**k / k**order`` for ``0 < z < 1``.

    Orders 0 to -3 use their rational closed forms; other orders sum the
    series until the tail is below 1e-14 relative.
    """
    if not 0 < z < 1:
        raise ValueError(f"z must lie in (0, 1), got {z}")
    if order == 0:
        return z / (1 - z)
    if order == -1:
        return z / (1 - z) ** 2
    if order == -2:
        return z * (1 + z) / (1 - z) ** 3
    if order == -3:
        return (z + 4 * z**2 + z**3) / (1 - z) ** 4
    total = 0.0
    k = 1
    zk = z
    while True:
        term = zk * float(k) ** (-order)
        total += term
        # past the peak of k**(-order) z**k the remaining tail is geometric
        ratio = z * ((k + 1) / k) ** (-order)
        if ratio < 1 and term * ratio / (1 - ratio) <= 1e-14 * total:
            return total
        k += 1
        zk *= z


def banded_Vl_bound(n_l: int, model: DecayModel, d: int) -> float:
    """``V_l <= n_l * 4 c^2 q^(2d) / (1 - q^(2d))`` for the modular banded coloring."""
    z = model.q ** (2 * d)
    if z == 0:
        return 0.0
    return n_l * 4 * model.c**2 * z / (1 - z)


def lattice_Vl_bound(n_l: int, model: DecayModel, d: int, D: int) -> float:
    """``V_l <= n_l * 4 c^2 D Li_(1-D)(q^(2d))`` for the closed-form lattice coloring."""
    if D < 1:
        raise ValueError("lattice dimension must be at least 1")
    z = model.q ** (2 * d)
    if z == 0:
        return 0.0
    return n_l * 4 * model.c**2 * D * polylog_nonpos(1 - D, z)


def constsign_Vl_bound(n_l: int, E_d: float) -> float:
    """``V_l <= 4 n_l E_d^2`` when off-diagonal entries beyond distance d share a sign."""
    if E_d < 0:
        raise ValueError("E_d must be nonnegative")
    return 4.0 * n_l * E_d**2


def deterministic_error_bound(n: int, E_d: float) -> float:
    """``|trace - probing| <= 2 n E_d`` for any distance-d coloring."""
    return 2.0 * n * E_d


def banded_error_bound(n: int, model: DecayModel, d: int) -> float:
    z = model.q**d
    return 0.0 if z == 0 else n * 2 * model.c * z / (1 - z)


def lattice_error_bound(n: int, model: DecayModel, d: int, D: int) -> float:
    z = model.q**d
    return 0.0 if z == 0 else n * 2 * model.c * D * polylog_nonpos(1 - D, z)


def _check_interval(f: ScalarFunction, a: float, b: float) -> tuple[float, float]:
    a, b = (float(t) for t in f.check_domain(np.array([a, b])))
    if f.family == "shifted-inverse" and a <= -f.params[0] <= b:
        raise DomainError(f"{f.name} has a pole in [{a}, {b}]")
    return a, b


def _interp_error(f: ScalarFunction, a: float, b: float, d: int, x, fx) -> float:
    p = Chebyshev.interpolate(f, d, domain=[a, b])
    return float(np.max(np.abs(fx - p(x))))


def chebyshev_Ed(f: ScalarFunction, interval, d: int, grid: int | None = None) -> float:
    """Upper estimate of the best degree-``d`` approximation error ``E_d``.

    Returns the smallest sup-norm error of the Chebyshev interpolants of
    degree ``0 .. d``. Each one over-estimates ``E_d`` by at most the
    Lebesgue constant of the Chebyshev nodes; taking the minimum keeps the
    estimate nonincreasing in ``d``. Errors are measured on Chebyshev
    extreme points of ``[a, b]`` (endpoints included); ``grid`` defaults to
    ``max(10 (d+1), 256)`` points.
    """
    if d < 0:
        raise ValueError("degree must be nonnegative")
    a, b = (float(t) for t in interval)
    if b < a:
        raise ValueError("empty interval")
    a, b = _check_interval(f, a, b)
    if b == a:
        return 0.0
    K = grid if grid is not None else max(10 * (d + 1), 256)
    x = 0.5 * (a + b) + 0.5 * (b - a) * np.cos(np.pi * np.arange(K) / (K - 1))
    fx = f(x)
    if not np.all(np.isfinite(fx)):
        raise DomainError(f"{f.name} is not finite on [{a}, {b}]")
    return min(_interp_error(f, a, b, k, x, fx) for k in range(d + 1))


def fit_decay(
    M: SparseSymMatrix | None = None,
    f: ScalarFunction | None = None,
    pairs_budget: int = 20000,
    *,
    F: np.ndarray | None = None,
    dist: np.ndarray | None = None,
    seed: int = 0,
) -> DecayModel:
    """Fit ``|f(A)_ij| <= c q^dist(i, j)`` to the dense ``f(A)``.

    Pairs ``i < j`` at finite distance >= 1 with ``|f(A)_ij| > 1e-14`` are
    used, sampled down to ``pairs_budget``. ``log|f(A)_ij|`` is regressed on
    the distance; ``c`` is then raised until every used pair satisfies the
    inequality. Returns ``DecayModel(0, 0)`` if no usable entry exists.
    """
    if F is None:
        F = dense_matrix_function(M, f)
    if dist is None:
        dist = all_pairs_distances(M)
    iu, ju = np.triu_indices(F.shape[0], k=1)
    dd = dist[iu, ju]
    vals = np.abs(F[iu, ju])
    use = (dd >= 1) & (vals > 1e-14)
    dd, vals = dd[use].astype(np.float64), vals[use]
    if vals.size == 0:
        return DecayModel(0.0, 0.0, "fitted")
    sampled = vals.size > pairs_budget
    if sampled:
        pick = np.random.default_rng(seed).choice(vals.size, pairs_budget, replace=False)
        dd, vals = dd[pick], vals[pick]
    logs = np.log(vals)
    if np.unique(dd).size >= 2:
        slope, intercept = np.polyfit(dd, logs, 1)
        q = float(np.clip(math.exp(slope), 1e-300, 1 - 1e-9))
        c = math.exp(intercept)
    else:
        q = 0.5
        c = 0.0
    c = max(c, float(np.max(vals / q**dd)))
    return DecayModel(c, q, "fitted", sampled)


def m_matrix_theta(M: SparseSymMatrix) -> float:
    """Smallest admissible ``theta`` in ``A = theta I - B``: the largest diagonal entry."""
    return float(M.diagonal().max()) if M.n else 0.0


def is_m_matrix(M: SparseSymMatrix, cap: int = DENSE_CAP) -> bool:
    """Nonpositive off-diagonal entries and a numerically nonnegative spectrum."""
    csr = M.to_scipy()
    off = csr - sp.diags_array(csr.diagonal())
    if off.nnz and off.data.max() > 0:
        return False
    if M.n <= cap:
        lam = np.linalg.eigvalsh(M.to_dense())
        lo, norm = lam[0], np.abs(lam).max()
    else:
        from scipy.sparse.linalg import eigsh

        lo = eigsh(csr, k=1, which="SA", return_eigenvectors=False)[0]
        norm = abs(eigsh(csr, k=1, which="LM", return_eigenvectors=False)[0])
    return bool(lo >= -1e-10 * norm)


def constant_sign_predicate(f: ScalarFunction, theta: float) -> SignReport | None:
    """Distance beyond which ``f(A)`` has constant sign for a symmetric
    M-matrix ``A = theta I - B``, from the derivative sign pattern of ``f``.

    Returns None for families without a known rule (the caller can fall back
    to :func:`dense_sign_scan`).
    """
    fam, p = f.family, f.params
    rule = None
    if fam == "shifted-inverse" and p[0] > 0:
        rule = (0, "nonnegative")
    elif fam == "exp-scale" and p[0] >= 0:
        rule = (0, "nonnegative")
    elif fam == "identity":
        rule = (1, "nonpositive")
    elif fam == "power":
        alpha = p[0]
        if alpha < 0:
            rule = (0, "nonnegative")
        elif alpha == 0:
            rule = (1, "nonnegative")
        elif alpha <= 1:
            rule = (1, "nonpositive")
        else:
            k = math.ceil(alpha)
            rule = (k, "nonnegative" if k % 2 == 0 else "nonpositive")
    elif fam == "entropy" and theta > 0:
        rule = (1 if theta <= math.exp(-1) else 2, "nonpositive")
    elif fam == "x-exp" and theta > 0:
        # (-1)^k f^(k)(theta) = (theta - k) e^-theta <= 0 for k >= ceil(theta),
        # so -f satisfies the alternating condition whatever the parity
        rule = (math.ceil(theta), "nonpositive")
    if rule is None:
        return None
    return SignReport(rule[0], rule[1], "analytic-predicate")


def dense_sign_scan(F: np.ndarray, dist: np.ndarray, tol: float = SIGN_TOL) -> SignReport:
    """Smallest ``d`` such that all entries at distance ``>= d`` share a sign.

    Entries with ``|value| <= tol`` count as either sign; unreachable pairs
    count as infinitely far apart.
    """
    dist = np.where(dist == UNREACHED, np.iinfo(np.int64).max, dist)
    finite = dist[dist != np.iinfo(np.int64).max]
    top = int(finite.max()) + 1 if finite.size else 1
    level = np.minimum(dist, top).ravel()
    vals = F.ravel()
    pos = np.zeros(top + 2, dtype=bool)
    neg = np.zeros(top + 2, dtype=bool)
    pos[level[vals > tol]] = True
    neg[level[vals < -tol]] = True
    # suffix OR: any positive / negative entry at distance >= k
    pos_tail = np.logical_or.accumulate(pos[::-1])[::-1]
    neg_tail = np.logical_or.accumulate(neg[::-1])[::-1]
    for k in range(top + 1):
        if pos_tail[k] and neg_tail[k]:
            continue
        if not pos_tail[k] and not neg_tail[k]:
            break
        return SignReport(k, "nonnegative" if pos_tail[k] else "nonpositive", "dense-scan")
    return SignReport(None, None, "dense-scan")
