"""Scalar functions, dense matrix functions and Lanczos quadratic forms.

``f(A)`` is formed densely through a symmetric eigendecomposition when an
exact reference is needed. For matrix-free work ``v^T f(A) v`` is
approximated by Lanczos (Gauss) quadrature with full reorthogonalization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg
import scipy.special

from .matrix import SparseSymMatrix

__all__ = [
    "DENSE_CAP",
    "DomainError",
    "DenseCapError",
    "ConvergenceWarning",
    "ScalarFunction",
    "parse_function",
    "SpectralInterval",
    "QFMethod",
    "parse_qf",
    "LanczosResult",
    "dense_matrix_function",
    "lanczos",
    "lanczos_quadrature",
    "lanczos_matfunc_vec",
    "quadratic_form",
    "spectral_interval",
    "QuadFormEngine",
]

DENSE_CAP = 4000

# relative size below which a negative eigenvalue is treated as a rounded zero
_ZERO_EIG_RTOL = 1e-10


class DomainError(ValueError):
    """The scalar function is undefined somewhere on the spectrum."""


class DenseCapError(ValueError):
    """The matrix is too large for the dense reference computation."""


class ConvergenceWarning(UserWarning):
    """Lanczos quadrature hit its step limit before meeting the tolerance."""


_FAMILIES = {
    "shifted-inverse": 1,
    "entropy": 0,
    "exp-scale": 1,
    "abs": 0,
    "power": 1,
    "x-exp": 0,
    "identity": 0,
    "polynomial": None,
    "custom": None,
}


@dataclass(frozen=True)
class ScalarFunction:
    """A named scalar function ``f`` applied elementwise to eigenvalues.

    Families and parameters:

    ``shifted-inverse`` (s)   1 / (x + s)
    ``entropy``               -x log x, with f(0) = 0
    ``exp-scale`` (t)         exp(-t x)
    ``abs``                   |x|
    ``power`` (alpha)         x ** alpha, nonnegative x only
    ``x-exp``                 x exp(-x)
    ``identity``              x
    ``polynomial`` (c0, c1, ...)   sum_k c_k x**k
    ``custom`` (xs, ys)       piecewise-linear interpolation of a point table
    """

    family: str
    params: tuple = ()

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown function family '{self.family}'")
        want = _FAMILIES[self.family]
        params = tuple(self.params)
        if self.family == "custom":
            xs, ys = (np.asarray(p, float) for p in params)
            if xs.shape != ys.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
                raise ValueError("custom table needs >= 2 increasing x values with matching y")
            params = (tuple(xs), tuple(ys))
        elif want is not None and len(params) != want:
            raise ValueError(f"'{self.family}' takes {want} parameter(s), got {len(params)}")
        elif self.family == "polynomial" and not params:
            raise ValueError("polynomial needs at least one coefficient")
        else:
            params = tuple(float(p) for p in params)
        object.__setattr__(self, "params", params)

    @classmethod
    def custom(cls, xs, ys) -> "ScalarFunction":
        return cls("custom", (tuple(xs), tuple(ys)))

    @property
    def name(self) -> str:
        if not self.params or self.family == "custom":
            return self.family
        return self.family + ":" + ",".join(f"{p:g}" for p in self.params)

    @property
    def needs_nonnegative(self) -> bool:
        return self.family in ("entropy", "power")

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        fam, p = self.family, self.params
        if fam == "shifted-inverse":
            return 1.0 / (x + p[0])
        if fam == "entropy":
            return scipy.special.entr(x)
        if fam == "exp-scale":
            return np.exp(-p[0] * x)
        if fam == "abs":
            return np.abs(x)
        if fam == "power":
            return np.power(x, p[0])
        if fam == "x-exp":
            return x * np.exp(-x)
        if fam == "identity":
            return x.copy()
        if fam == "polynomial":
            return np.polynomial.polynomial.polyval(x, p)
        xs, ys = p
        return np.interp(x, xs, ys)

    def check_domain(self, lam) -> np.ndarray:
        """Return ``lam`` with rounding-level negatives zeroed where the family
        requires ``x >= 0``; raise :class:`DomainError` if ``f`` is undefined.
        """
        lam = np.asarray(lam, dtype=np.float64)
        if lam.size == 0:
            return lam
        scale = max(float(np.max(np.abs(lam))), 1.0)
        if self.needs_nonnegative:
            if lam.min() < -_ZERO_EIG_RTOL * scale:
                raise DomainError(
                    f"{self.name} requires a nonnegative spectrum, found {lam.min():.3e}"
                )
            lam = np.where(lam < 0, 0.0, lam)
        elif self.family == "shifted-inverse":
            if np.any(np.abs(lam + self.params[0]) <= _ZERO_EIG_RTOL * scale):
                raise DomainError(f"{self.name} has a pole on the spectrum")
        elif self.family == "custom":
            xs = self.params[0]
            if lam.min() < xs[0] - _ZERO_EIG_RTOL * scale or lam.max() > xs[-1] + _ZERO_EIG_RTOL * scale:
                raise DomainError("spectrum leaves the custom table range")
        return lam


def parse_function(text: str) -> ScalarFunction:
    """Parse ``family[:p1[,p2...]]``, e.g. ``"shifted-inverse:2"`` or ``"entropy"``."""
    family, _, rest = text.strip().partition(":")
    params = tuple(float(t) for t in rest.replace(":", ",").split(",") if t.strip()) if rest else ()
    return ScalarFunction(family, params)


@dataclass(frozen=True)
class SpectralInterval:
    a: float
    b: float
    method: str
    margin: float = 0.0

    def __iter__(self):
        yield self.a
        yield self.b


@dataclass(frozen=True)
class QFMethod:
    """How quadratic forms are evaluated: ``dense`` or ``lanczos`` with ``k`` steps."""

    kind: str = "dense"
    k: int = 100
    tol: float = 1e-10

    def __post_init__(self):
        if self.kind not in ("dense", "lanczos"):
            raise ValueError(f"unknown quadratic-form method '{self.kind}'")
        if self.k < 1:
            raise ValueError("k must be at least 1")

    def __str__(self):
        return "dense" if self.kind == "dense" else f"lanczos:{self.k}:{self.tol:g}"


def parse_qf(text: str | QFMethod | None) -> QFMethod:
    """Parse ``"dense"`` or ``"lanczos[:k[:tol]]"``."""
    if text is None:
        return QFMethod()
    if isinstance(text, QFMethod):
        return text
    parts = text.split(":")
    if parts[0] == "dense" and len(parts) == 1:
        return QFMethod("dense")
    if parts[0] == "lanczos" and len(parts) <= 3:
        k = int(parts[1]) if len(parts) > 1 else 100
        tol = float(parts[2]) if len(parts) > 2 else 1e-10
        return QFMethod("lanczos", k, tol)
    raise ValueError(f"cannot parse quadratic-form method '{text}'")


def _as_dense(M) -> np.ndarray:
    if isinstance(M, SparseSymMatrix):
        return M.to_dense()
    return np.asarray(M, dtype=np.float64)


def dense_matrix_function(M, f: ScalarFunction, cap: int = DENSE_CAP) -> np.ndarray:
    """``f(A) = Q f(Lambda) Q^T`` from a full symmetric eigendecomposition."""
    n = M.shape[0]
    if n > cap:
        raise DenseCapError(f"n={n} exceeds the dense cap {cap}")
    lam, Q = np.linalg.eigh(_as_dense(M))
    lam = f.check_domain(lam)
    F = (Q * f(lam)) @ Q.T
    return 0.5 * (F + F.T)


class LanczosResult(NamedTuple):
    value: float
    steps: int
    converged: bool


def _lanczos_steps(matvec: Callable, v: np.ndarray, k: int, breakdown_tol: float):
    # yields (alpha, beta, Q, exhausted) after every step
    n = v.shape[0]
    k = min(k, n)
    Q = np.zeros((n, k))
    alpha = np.zeros(k)
    beta = np.zeros(k)
    q = v / np.linalg.norm(v)
    scale = 0.0
    for j in range(k):
        Q[:, j] = q
        w = matvec(q)
        alpha[j] = q @ w
        # two passes of classical Gram-Schmidt keep the basis orthogonal
        w -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        w -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        beta[j] = np.linalg.norm(w)
        scale = max(scale, abs(alpha[j]), beta[j])
        exhausted = j + 1 == n or beta[j] <= breakdown_tol * max(scale, 1e-300)
        yield alpha[: j + 1], beta[:j], Q[:, : j + 1], exhausted
        if exhausted:
            return
        q = w / beta[j]


def lanczos(matvec: Callable, v: np.ndarray, k: int, breakdown_tol: float = 1e-14):
    """Lanczos tridiagonalization with full reorthogonalization.

    Returns ``(alpha, beta, Q)`` with ``Q`` of shape (n, j), ``j <= k`` steps,
    and ``beta`` of length ``j - 1``. Stops early when the Krylov space is
    exhausted (``beta`` below ``breakdown_tol`` relative to the matrix scale).
    """
    for alpha, beta, Q, _ in _lanczos_steps(matvec, np.asarray(v, float), k, breakdown_tol):
        pass
    return alpha, beta, Q


def _gauss_quadrature(alpha, beta, f: ScalarFunction) -> float:
    if alpha.size == 1:
        theta, first = alpha.copy(), np.ones(1)
    else:
        theta, S = scipy.linalg.eigh_tridiagonal(alpha, beta)
        first = S[0]
    theta = f.check_domain(theta)
    return float(np.sum(first**2 * f(theta)))


def lanczos_quadrature(
    M, f: ScalarFunction, v, k: int = 100, tol: float = 1e-10, breakdown_tol: float = 1e-14
) -> LanczosResult:
    """``||v||^2 e_1^T f(T_j) e_1`` with early stopping.

    Iteration stops once the estimate changes by less than ``tol`` relative
    between consecutive steps, or when the Lanczos basis breaks down (the
    Krylov space is exhausted and the estimate is exact).
    """
    v = np.asarray(v, dtype=np.float64)
    nrm2 = float(v @ v)
    if nrm2 == 0:
        raise ValueError("starting vector must be nonzero")
    op = M.to_scipy() if isinstance(M, SparseSymMatrix) else np.asarray(M)
    prev = None
    steps = 0
    for alpha, beta, _, exhausted in _lanczos_steps(lambda x: op @ x, v, k, breakdown_tol):
        steps = alpha.size
        est = nrm2 * _gauss_quadrature(alpha, beta, f)
        if exhausted or (prev is not None and abs(est - prev) < tol * abs(est)):
            return LanczosResult(est, steps, True)
        prev = est
    return LanczosResult(est, steps, False)


def lanczos_matfunc_vec(M, f: ScalarFunction, v, k: int = 100) -> np.ndarray:
    """Approximate ``f(A) v`` by ``||v|| Q_j f(T_j) e_1`` after ``j <= k`` steps."""
    v = np.asarray(v, dtype=np.float64)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        return np.zeros_like(v)
    op = M.to_scipy() if isinstance(M, SparseSymMatrix) else np.asarray(M)
    alpha, beta, Q = lanczos(lambda x: op @ x, v, k)
    if alpha.size == 1:
        theta, S = alpha.copy(), np.ones((1, 1))
    else:
        theta, S = scipy.linalg.eigh_tridiagonal(alpha, beta)
    theta = f.check_domain(theta)
    return nrm * (Q @ (S @ (f(theta) * S[0])))


def quadratic_form(M, f: ScalarFunction, v, method: str | QFMethod = "dense") -> float:
    """``v^T f(A) v`` either exactly (dense) or by Lanczos quadrature.

    A :class:`ConvergenceWarning` is issued when Lanczos reaches its step
    limit without meeting the tolerance; the estimate is still returned.
    """
    method = parse_qf(method)
    v = np.asarray(v, dtype=np.float64)
    if method.kind == "dense":
        F = dense_matrix_function(M, f)
        return float(v @ F @ v)
    res = lanczos_quadrature(M, f, v, method.k, method.tol)
    if not res.converged:
        warnings.warn(
            f"Lanczos quadrature not converged after {res.steps} steps", ConvergenceWarning, stacklevel=2
        )
    return res.value


def spectral_interval(
    M, method: str = "exact-dense", margin: float = 0.05, k: int = 80, seed: int = 0
) -> SpectralInterval:
    """Interval enclosing the spectrum of ``M``.

    ``exact-dense`` uses all eigenvalues. ``lanczos-estimate`` runs ``k``
    Lanczos steps from a random start and widens the extreme Ritz values by
    ``margin`` times their spread on each side.
    """
    if method == "exact-dense":
        lam = np.linalg.eigvalsh(_as_dense(M))
        return SpectralInterval(float(lam[0]), float(lam[-1]), method, 0.0)
    if method != "lanczos-estimate":
        raise ValueError(f"unknown spectral interval method '{method}'")
    op = M.to_scipy() if isinstance(M, SparseSymMatrix) else np.asarray(M)
    v = np.random.default_rng(seed).standard_normal(op.shape[0])
    alpha, beta, _ = lanczos(lambda x: op @ x, v, k)
    if alpha.size == 1:
        ritz = alpha
    else:
        ritz = scipy.linalg.eigh_tridiagonal(alpha, beta, eigvals_only=True)
    lo, hi = float(ritz.min()), float(ritz.max())
    pad = margin * (hi - lo)
    return SpectralInterval(lo - pad, hi + pad, method, margin)


class QuadFormEngine:
    """Evaluates quadratic forms and products with a fixed ``f(A)``.

    In ``dense`` mode ``f(A)`` is formed once and every quadratic form is
    exact. In ``lanczos`` mode nothing is precomputed.
    """

    def __init__(self, M, f: ScalarFunction, method: str | QFMethod = "dense", cap: int = DENSE_CAP,
                 F: np.ndarray | None = None):
        self.M = M
        self.f = f
        self.method = parse_qf(method)
        self.n = M.shape[0]
        self.F = None
        if self.method.kind == "dense":
            self.F = F if F is not None else dense_matrix_function(M, f, cap)
        self.unconverged = 0

    def quad(self, v) -> float:
        v = np.asarray(v, dtype=np.float64)
        if self.F is not None:
            return float(v @ self.F @ v)
        if not np.any(v):
            return 0.0
        res = lanczos_quadrature(self.M, self.f, v, self.method.k, self.method.tol)
        if not res.converged:
            self.unconverged += 1
        return res.value

    def quad_on(self, idx: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Quadratic forms of vectors supported on ``idx``; rows of ``X`` hold
        the values on ``idx``. Returns one value per row."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.F is not None:
            B = self.F[np.ix_(idx, idx)]
            return np.einsum("si,ij,sj->s", X, B, X)
        out = np.empty(X.shape[0])
        w = np.zeros(self.n)
        for s, x in enumerate(X):
            w[idx] = x
            out[s] = self.quad(w)
        return out

    def apply(self, V: np.ndarray) -> np.ndarray:
        """``f(A) V`` column by column."""
        V = np.asarray(V, dtype=np.float64)
        if self.F is not None:
            return self.F @ V
        cols = [lanczos_matfunc_vec(self.M, self.f, V[:, j], self.method.k) for j in range(V.shape[1])]
        return np.column_stack(cols) if cols else np.zeros_like(V)
