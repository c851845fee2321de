"""Trace estimators for ``trace(f(A))``.

Deterministic probing, stochastic probing with Rademacher or Gaussian probe
entries, plain Hutchinson and Hutch++, together with exact per-color
variances, sample allocation rules and tail-bound helpers.

Every random probe vector is drawn from its own generator seeded by
``(seed, color, sample)``, so results do not depend on evaluation order or
on the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.special

from .coloring import Coloring
from .funcs import QFMethod, QuadFormEngine, ScalarFunction, dense_matrix_function

__all__ = [
    "DISTRIBUTIONS",
    "SamplePlan",
    "TraceEstimate",
    "ColorVariances",
    "draw_probe",
    "deterministic_probing",
    "stochastic_probing",
    "exact_color_variances",
    "estimator_variance",
    "allocate_uniform",
    "allocate_variance_optimal",
    "allocate_tail_optimal",
    "allocate_budget_sqrt",
    "make_plan",
    "hutchinson",
    "hutchpp",
    "tail_bound_probing",
    "tail_parameters",
    "clt_required_variance",
]

DISTRIBUTIONS = ("rademacher", "gaussian")

# stream tags keep Hutchinson/Hutch++ draws apart from per-color probing draws
_HUTCHINSON_STREAM = 2**31 - 1
_HUTCHPP_SKETCH = 2**31 - 2
_HUTCHPP_RESIDUAL = 2**31 - 3


@dataclass(frozen=True)
class SamplePlan:
    """Per-color sample counts ``N_1 .. N_m``."""

    counts: tuple
    origin: str = "manual"
    continuous: tuple | None = None
    note: str = ""

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if not counts or min(counts) < 1:
            raise ValueError("every color needs at least one sample")
        object.__setattr__(self, "counts", counts)
        if self.continuous is not None:
            object.__setattr__(self, "continuous", tuple(float(c) for c in self.continuous))

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def m(self) -> int:
        return len(self.counts)

    def __len__(self):
        return len(self.counts)


@dataclass
class TraceEstimate:
    value: float
    per_color_mean: np.ndarray
    per_color_sample_variance: np.ndarray
    quad_forms_used: int
    seed: int | None
    distribution: str
    method: str = ""
    counts: tuple = ()
    unconverged: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_color_mean"] = [float(x) for x in self.per_color_mean]
        d["per_color_sample_variance"] = [
            None if not np.isfinite(x) else float(x) for x in self.per_color_sample_variance
        ]
        d["counts"] = list(self.counts)
        return d


@dataclass(frozen=True)
class ColorVariances:
    """Single-sample variances ``V_l`` of the per-color quadratic forms."""

    V: np.ndarray
    distribution: str
    source: str = "exact-dense"

    def __len__(self):
        return len(self.V)


def _check_distribution(distribution: str):
    if distribution not in DISTRIBUTIONS:
        raise ValueError(f"distribution must be one of {DISTRIBUTIONS}, got '{distribution}'")


def draw_probe(seed: int, color: int, sample: int, size: int, distribution: str) -> np.ndarray:
    """Probe entries for sample ``sample`` of color ``color`` (both 0-based)."""
    rng = np.random.default_rng([seed, color, sample])
    if distribution == "rademacher":
        return rng.integers(0, 2, size=size).astype(np.float64) * 2.0 - 1.0
    return rng.standard_normal(size)


def _draw_block(rng: np.random.Generator, shape, distribution: str) -> np.ndarray:
    if distribution == "rademacher":
        return rng.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0
    return rng.standard_normal(shape)


def _engine(M, f, qf, engine) -> QuadFormEngine:
    return engine if engine is not None else QuadFormEngine(M, f, qf)


def _plan_counts(plan, m: int) -> tuple:
    if isinstance(plan, SamplePlan):
        counts = plan.counts
    elif np.isscalar(plan):
        counts = (int(plan),) * m
    else:
        counts = tuple(int(c) for c in plan)
    if len(counts) != m:
        raise ValueError(f"plan has {len(counts)} entries, coloring has {m} colors")
    if min(counts) < 1:
        raise ValueError("every color needs at least one sample")
    return counts


def deterministic_probing(
    M, f: ScalarFunction, coloring: Coloring, qf: str | QFMethod = "dense", *, engine=None
) -> TraceEstimate:
    """Sum of ``v_l^T f(A) v_l`` over the 0/1 indicator vectors of the colors."""
    eng = _engine(M, f, qf, engine)
    per_color = np.array([eng.quad_on(idx, np.ones(idx.size))[0] for idx in coloring.classes])
    return TraceEstimate(
        value=float(np.sum(per_color)),
        per_color_mean=per_color,
        per_color_sample_variance=np.zeros(coloring.m),
        quad_forms_used=coloring.m,
        seed=None,
        distribution="deterministic",
        method="det-probing",
        counts=(1,) * coloring.m,
        unconverged=eng.unconverged,
    )


def stochastic_probing(
    M,
    f: ScalarFunction,
    coloring: Coloring,
    plan,
    distribution: str = "rademacher",
    seed: int = 0,
    qf: str | QFMethod = "dense",
    *,
    engine: QuadFormEngine | None = None,
    workers: int = 1,
    samples: Sequence[np.ndarray] | None = None,
) -> TraceEstimate:
    """Stochastic probing estimate ``sum_l mean_s w_ls^T f(A) w_ls``.

    ``w_ls`` carries i.i.d. Rademacher or standard normal entries on color
    class ``C_l`` and zeros elsewhere.

    Parameters
    ----------
    plan : SamplePlan, int or sequence of int
        Samples per color; a scalar means the same count for every color.
    samples : sequence of arrays, optional
        Replaces random draws: ``samples[l]`` has shape ``(N_l, n_l)``.
        Used to replay or enumerate probe vectors exactly.
    workers : int
        Threads used across colors. The result does not depend on it.
    """
    _check_distribution(distribution)
    eng = _engine(M, f, qf, engine)
    classes = coloring.classes
    if samples is not None:
        counts = tuple(len(s) for s in samples)
        _plan_counts(counts, coloring.m)
    else:
        counts = _plan_counts(plan, coloring.m)

    def color_values(ell: int) -> np.ndarray:
        idx = classes[ell]
        if samples is not None:
            X = np.asarray(samples[ell], dtype=np.float64).reshape(counts[ell], idx.size)
        else:
            X = np.empty((counts[ell], idx.size))
            for s in range(counts[ell]):
                X[s] = draw_probe(seed, ell, s, idx.size, distribution)
        if idx.size == 0:
            return np.zeros(counts[ell])
        return eng.quad_on(idx, X)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(color_values, range(coloring.m)))
    else:
        values = [color_values(ell) for ell in range(coloring.m)]

    means = np.array([v.mean() for v in values])
    var = np.array([v.var(ddof=1) if v.size >= 2 else np.nan for v in values])
    return TraceEstimate(
        value=float(np.sum(means)),
        per_color_mean=means,
        per_color_sample_variance=var,
        quad_forms_used=int(sum(counts)),
        seed=None if samples is not None else seed,
        distribution=distribution,
        method="stoch-probing",
        counts=counts,
        unconverged=eng.unconverged,
    )


def exact_color_variances(
    M, f: ScalarFunction, coloring: Coloring, distribution: str = "rademacher", *, F=None
) -> ColorVariances:
    """Exact ``V_l`` from the dense ``f(A)``.

    Rademacher: ``2 ||Off(F_C)||_F^2``. Gaussian: ``2 ||F_C||_F^2``.
    """
    _check_distribution(distribution)
    if F is None:
        F = dense_matrix_function(M, f)
    V = np.empty(coloring.m)
    for ell, idx in enumerate(coloring.classes):
        B = F[np.ix_(idx, idx)]
        total = np.sum(B * B)
        if distribution == "rademacher":
            total -= np.sum(np.diag(B) ** 2)
        V[ell] = 2.0 * max(total, 0.0)
    return ColorVariances(V, distribution, "exact-dense")


def estimator_variance(V, plan) -> float:
    """Variance ``sum_l V_l / N_l`` of the stochastic probing estimator."""
    V = np.asarray(V.V if isinstance(V, ColorVariances) else V, dtype=np.float64)
    counts = np.asarray(_plan_counts(plan, V.size), dtype=np.float64)
    return float(np.sum(V / counts))


def allocate_uniform(m: int, N: int) -> SamplePlan:
    return SamplePlan((N,) * m, "uniform")


def _sqrt_allocation(V, scale: float, origin: str) -> SamplePlan:
    # N_l = ceil(mu sqrt(V_l)), mu = scale * sum sqrt(V); zero-variance colors get one sample
    V = np.asarray(V.V if isinstance(V, ColorVariances) else V, dtype=np.float64)
    if V.size == 0 or np.any(V < 0) or not np.all(np.isfinite(V)):
        raise ValueError("variances must be finite and nonnegative")
    if not np.any(V > 0):
        return SamplePlan((1,) * V.size, origin, tuple(np.zeros(V.size)),
                          note="all variances are zero; the estimator is exact")
    root = np.sqrt(V)
    mu = scale * root.sum()
    cont = mu * root
    counts = np.maximum(np.ceil(cont), 1).astype(int)
    return SamplePlan(tuple(counts), origin, tuple(cont))


def allocate_variance_optimal(V, epsilon: float) -> SamplePlan:
    """Fewest samples with ``sum V_l / N_l <= epsilon**2``.

    The relaxed optimum ``N_l = mu sqrt(V_l)``, ``mu = epsilon**-2 sum sqrt(V)``
    is kept in ``plan.continuous``; the counts are its ceilings.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return _sqrt_allocation(V, epsilon**-2, "variance-optimal")


def allocate_tail_optimal(V, epsilon: float, delta: float) -> SamplePlan:
    """Counts ``ceil(mu sqrt(V_l))`` with ``mu = 8 epsilon**-2 log(2/delta) sum sqrt(V)``.

    Targets ``P(|error| >= epsilon) <= delta`` from the Rademacher tail bound
    after neglecting its spectral-norm term.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return _sqrt_allocation(V, 8.0 * epsilon**-2 * math.log(2.0 / delta), "tail-optimal")


def allocate_budget_sqrt(sizes, budget: int) -> SamplePlan:
    """Spread ``budget`` samples proportionally to ``sqrt(n_l)``, rounding to nearest.

    The realized total can differ from ``budget`` by rounding.
    """
    sizes = np.asarray(sizes, dtype=np.float64)
    if budget < sizes.size:
        raise ValueError(f"budget {budget} is smaller than the number of colors {sizes.size}")
    root = np.sqrt(sizes)
    nu = budget / root.sum()
    cont = nu * root
    # round half up: numpy rounds half to even
    counts = np.maximum(np.floor(cont + 0.5), 1).astype(int)
    plan = SamplePlan(tuple(counts), "budget-sqrt-size", tuple(cont))
    if plan.total != budget:
        plan = SamplePlan(plan.counts, plan.origin, plan.continuous,
                          note=f"rounding gives {plan.total} samples for budget {budget}")
    return plan


def make_plan(text: str, coloring: Coloring, V=None) -> SamplePlan:
    """Build a plan from ``uniform:N``, ``budget:N``, ``var-opt:eps``,
    ``tail-opt:eps:delta`` or ``manual:n1,n2,...``. The optimal rules need
    ``V``.
    """
    kind, _, rest = text.partition(":")
    args = rest.split(":") if rest else []
    if kind == "uniform":
        return allocate_uniform(coloring.m, int(args[0]))
    if kind == "budget":
        return allocate_budget_sqrt(coloring.sizes, int(args[0]))
    if kind == "manual":
        return SamplePlan(tuple(int(t) for t in rest.split(",")), "manual")
    if kind in ("var-opt", "tail-opt"):
        if V is None:
            raise ValueError(f"plan '{kind}' needs per-color variances")
        if kind == "var-opt":
            return allocate_variance_optimal(V, float(args[0]))
        return allocate_tail_optimal(V, float(args[0]), float(args[1]))
    raise ValueError(f"cannot parse sample plan '{text}'")


def hutchinson(
    M,
    f: ScalarFunction,
    N: int,
    distribution: str = "rademacher",
    seed: int = 0,
    qf: str | QFMethod = "dense",
    *,
    engine: QuadFormEngine | None = None,
) -> TraceEstimate:
    """Average of ``x^T f(A) x`` over ``N`` full-length random vectors."""
    if N < 1:
        raise ValueError("N must be at least 1")
    _check_distribution(distribution)
    eng = _engine(M, f, qf, engine)
    n = eng.n
    X = np.empty((N, n))
    for s in range(N):
        X[s] = draw_probe(seed, _HUTCHINSON_STREAM, s, n, distribution)
    vals = eng.quad_on(np.arange(n), X)
    return TraceEstimate(
        value=float(vals.mean()),
        per_color_mean=np.array([vals.mean()]),
        per_color_sample_variance=np.array([vals.var(ddof=1) if N >= 2 else np.nan]),
        quad_forms_used=N,
        seed=seed,
        distribution=distribution,
        method="hutchinson",
        counts=(N,),
        unconverged=eng.unconverged,
    )


def hutchpp(
    M,
    f: ScalarFunction,
    budget: int,
    seed: int = 0,
    qf: str | QFMethod = "dense",
    distribution: str = "rademacher",
    *,
    engine: QuadFormEngine | None = None,
) -> TraceEstimate:
    """Hutch++: exact trace on a sketched range plus Hutchinson on the rest.

    A third of ``budget`` goes to the sketch ``f(A) S``, a third to
    ``Q^T f(A) Q`` for its orthonormal basis ``Q``, and the remainder to
    Hutchinson on ``(I - QQ^T) f(A) (I - QQ^T)``. A rank-deficient sketch
    shrinks ``Q``.
    """
    if budget < 3:
        raise ValueError("Hutch++ needs a budget of at least 3")
    _check_distribution(distribution)
    eng = _engine(M, f, qf, engine)
    n = eng.n
    k = budget // 3
    r = budget - 2 * k
    S = _draw_block(np.random.default_rng([seed, _HUTCHPP_SKETCH]), (n, k), distribution)
    Y = eng.apply(S)
    Q = scipy.linalg.orth(Y) if np.any(Y) else np.zeros((n, 0))
    low = float(np.trace(Q.T @ eng.apply(Q))) if Q.shape[1] else 0.0
    G = _draw_block(np.random.default_rng([seed, _HUTCHPP_RESIDUAL]), (n, r), distribution)
    G -= Q @ (Q.T @ G)
    vals = np.array([eng.quad(G[:, j]) for j in range(r)])
    return TraceEstimate(
        value=low + float(vals.mean()),
        per_color_mean=np.array([low, vals.mean()]),
        per_color_sample_variance=np.array([0.0, vals.var(ddof=1) if r >= 2 else np.nan]),
        quad_forms_used=k + Q.shape[1] + r,
        seed=seed,
        distribution=distribution,
        method="hutchpp",
        counts=(k, Q.shape[1], r),
        unconverged=eng.unconverged,
        extra={"rank": int(Q.shape[1])},
    )


def tail_bound_probing(eta1: float, eta2: float, epsilon: float) -> float:
    """``min(1, 2 exp(-eps^2 / (8 eta1 + 8 eps eta2)))``; 0 if both etas vanish."""
    if eta1 < 0 or eta2 < 0:
        raise ValueError("eta1 and eta2 must be nonnegative")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    denom = 8.0 * eta1 + 8.0 * epsilon * eta2
    if denom == 0:
        return 0.0
    return min(1.0, 2.0 * math.exp(-(epsilon**2) / denom))


def tail_parameters(F: np.ndarray, coloring: Coloring, plan) -> tuple[float, float]:
    """``(eta1, eta2)`` for the Rademacher tail bound from a dense ``f(A)``.

    ``eta1 = sum V_l / N_l`` with the Rademacher ``V_l``, and
    ``eta2 = max_l ||Off(F_C)||_2 / N_l``.
    """
    counts = _plan_counts(plan, coloring.m)
    eta1 = 0.0
    eta2 = 0.0
    for idx, N in zip(coloring.classes, counts):
        B = F[np.ix_(idx, idx)].copy()
        np.fill_diagonal(B, 0.0)
        eta1 += 2.0 * np.sum(B * B) / N
        if B.size:
            eta2 = max(eta2, float(np.linalg.norm(B, 2)) / N)
    return float(eta1), eta2


def clt_required_variance(epsilon: float, delta: float) -> float:
    """Largest variance ``eps^2 / (2 erfinv(1 - delta)^2)`` for which the normal
    approximation gives ``P(|error| >= eps) <= delta``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return epsilon**2 / (2.0 * scipy.special.erfinv(1.0 - delta) ** 2)
