"""Moment propagation along the Euler central path.

The Euler-Maruyama iterate is split as ``X_n = x^c_n + dW_eff_n`` where the
central path ``x^c`` is the explicit Euler solution of the noise-free ODE.
Taylor-expanding drift and diffusion about ``x^c_{n-1}`` to order ``N``
gives, per component ``k``, a polynomial in the previous effective noise
``z`` and the new increment ``w``::

    P_k(z, w) = z_k + h sum_{1<=|a|<=N} d^a u_k / a! z^a
                    + sum_{|a|<=N-1} sum_j d^a G_kj / a! w_j z^a

Moments of the new effective noise follow from expanding ``prod_k P_k^{r_k}``
and replacing each ``w^s z^r'`` with ``E[dW^s] E[z^r']`` (the increment is
independent of the past). Monomials whose ``z``-degree exceeds ``N`` are
discarded so the table over ``|r| <= N`` is closed. ``truncation="combined"``
instead discards on ``|s| + |r'| > N``; both agree for additive noise up to
``N = 2`` but only the default keeps multiplicative-noise models exact.

Two implementations are provided. :func:`build_update_polynomial` and
:func:`step_moment_table` work on sparse dictionaries and are easy to audit.
:class:`ExpansionPlan` expands the product symbolically once per
``(v, d, N, h)`` and then evaluates a step for a whole batch of independent
propagations with a few array operations; this is what
:func:`propagate_fixed` and the PCE driver use.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy import sparse

from .errors import ConfigError, NumericalError
from .models import NoiseModel, SdeModel
from .multiindex import (
    MAX_ORDER,
    MultiIndex,
    binomial,
    enumerate_up_to,
    factorial,
    index_map,
    lower_set,
    monomial,
)

logger = logging.getLogger(__name__)

TRUNCATION_RULES = ("state", "combined")
LOG_EVERY = 1000


def _check_order(N: int) -> None:
    if not 1 <= N <= MAX_ORDER:
        raise ConfigError(f"truncation order must lie in 1..{MAX_ORDER}, got {N}")


def _check_rule(truncation: str) -> None:
    if truncation not in TRUNCATION_RULES:
        raise ConfigError(f"unknown truncation rule {truncation!r}")


def _keep(s_order: int, r_order: int, N: int, truncation: str) -> bool:
    if truncation == "state":
        return r_order <= N
    return s_order + r_order <= N


def step_count(t0: float, tn: float, h: float) -> int:
    """Number of Euler steps ``ceil((tn - t0) / h)``.

    A ratio within ``1e-9`` (relative) of an integer is treated as that
    integer so that e.g. ``600 / 0.1`` gives 6000 rather than 6001.
    """
    if h <= 0:
        raise ConfigError("step size must be positive")
    if tn <= t0:
        raise ConfigError("final time must exceed the initial time")
    ratio = (tn - t0) / h
    nearest = round(ratio)
    if abs(ratio - nearest) <= 1e-9 * max(1.0, ratio):
        return int(nearest)
    return int(math.ceil(ratio))


# -- value types ------------------------------------------------------------------


@dataclass
class CentralPath:
    """Times and central-path states (possibly subsampled)."""

    times: np.ndarray
    states: np.ndarray


@dataclass
class MomentTable:
    """Effective-noise moments ``E[dW_eff^r]`` for all ``|r| <= order``.

    ``values`` follows :func:`enumerate_up_to` order, so ``values[0]`` is the
    zero-index entry (always 1).
    """

    order: int
    dim: int
    values: np.ndarray

    @classmethod
    def initial(cls, dim: int, order: int) -> "MomentTable":
        values = np.zeros(len(enumerate_up_to(dim, order)))
        values[0] = 1.0
        return cls(order, dim, values)

    @property
    def indices(self) -> tuple[MultiIndex, ...]:
        return enumerate_up_to(self.dim, self.order)

    def __getitem__(self, r: Sequence[int]) -> float:
        r = MultiIndex(r)
        if r.order > self.order:
            raise KeyError(f"{r} exceeds table order {self.order}")
        return float(self.values[index_map(self.dim, self.order)[r]])

    def as_dict(self) -> dict[MultiIndex, float]:
        return {r: float(v) for r, v in zip(self.indices, self.values)}


@dataclass
class LinearNoiseState:
    """First and second moments of the order-1 effective noise."""

    mean: np.ndarray
    second_moment: np.ndarray

    @classmethod
    def initial(cls, dim: int) -> "LinearNoiseState":
        return cls(np.zeros(dim), np.zeros((dim, dim)))

    @property
    def covariance(self) -> np.ndarray:
        return self.second_moment - np.outer(self.mean, self.mean)


UpdatePolynomial = list  # per component: {(s, r): coefficient}


# -- elementary operations --------------------------------------------------------


def central_step(x, t: float, h: float, model: SdeModel) -> np.ndarray:
    """One explicit Euler step of the noise-free ODE."""
    if h <= 0:
        raise ConfigError("step size must be positive")
    x = np.asarray(x, dtype=float)
    return x + h * model.drift(x, t)


def build_update_polynomial(x_c, t: float, h: float, model: SdeModel, N: int) -> UpdatePolynomial:
    """Coefficients of the order-``N`` effective-noise update about ``x_c``.

    Returns one dictionary per state component mapping
    ``(s, r)`` (noise and state multi-indices) to the coefficient of
    ``w^s z^r``. Zero coefficients are omitted.
    """
    _check_order(N)
    v, d = model.state_dim, model.noise_dim
    U = model.drift_jet(x_c, t, N)[0]
    G = model.diffusion_jet(x_c, t, N - 1)[0]
    zero_s = MultiIndex.zero(d)
    polys = []
    for k in range(v):
        poly: dict = {}
        for p, a in enumerate(enumerate_up_to(v, N)):
            if p == 0:
                continue
            coef = h * U[k, p] / factorial(a)
            if a == MultiIndex.unit(v, k):
                coef += 1.0
            if coef != 0.0:
                poly[(zero_s, a)] = float(coef)
        for j in range(d):
            s = MultiIndex.unit(d, j)
            for p, a in enumerate(enumerate_up_to(v, N - 1)):
                coef = G[k, j, p] / factorial(a)
                if coef != 0.0:
                    poly[(s, a)] = float(coef)
        polys.append(poly)
    return polys


def _multiply(left: dict, right: dict, N: int, truncation: str) -> dict:
    out: dict = {}
    for (s1, r1), c1 in left.items():
        for (s2, r2), c2 in right.items():
            s, r = s1 + s2, r1 + r2
            if not _keep(s.order, r.order, N, truncation):
                continue
            key = (s, r)
            out[key] = out.get(key, 0.0) + c1 * c2
    return out


def step_moment_table(
    table: MomentTable,
    poly: UpdatePolynomial,
    noise: NoiseModel,
    h: float,
    N: int,
    truncation: str = "state",
) -> MomentTable:
    """Advance the moment table one step using sparse polynomial products."""
    _check_rule(truncation)
    if table.order != N or table.dim != len(poly):
        raise ConfigError("moment table does not match the update polynomial")
    d = noise.dim
    one = {(MultiIndex.zero(d), MultiIndex.zero(table.dim)): 1.0}
    values = np.empty_like(table.values)
    values[0] = 1.0
    noise_cache: dict = {}
    for p, r in enumerate(table.indices):
        if p == 0:
            continue
        product = one
        for k, power in enumerate(r):
            for _ in range(power):
                product = _multiply(product, poly[k], N, truncation)
        total = 0.0
        for (s, r_prime), coef in product.items():
            if s not in noise_cache:
                noise_cache[s] = noise.increment_moment(s, h)
            moment = noise_cache[s]
            if moment != 0.0:
                total += coef * moment * table[r_prime]
        values[p] = total
    if not np.all(np.isfinite(values)):
        raise NumericalError("non-finite effective-noise moment")
    return MomentTable(N, table.dim, values)


def _noise_first_second(noise: NoiseModel, h: float) -> tuple[np.ndarray, np.ndarray]:
    d = noise.dim
    m1 = np.array([noise.increment_moment(MultiIndex.unit(d, j), h) for j in range(d)])
    m2 = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            m2[i, j] = noise.increment_moment(MultiIndex.unit(d, i) + MultiIndex.unit(d, j), h)
    return m1, m2


def step_linear_noise(
    state: LinearNoiseState, x_c, t: float, h: float, model: SdeModel, noise: Optional[NoiseModel] = None
) -> LinearNoiseState:
    """Advance the order-1 effective noise ``A z + B w`` by one step.

    ``A = I + h J_u(x_c)`` and ``B = G(x_c)``. Without ``noise`` the
    increment is taken to be Wiener (mean 0, covariance ``h I``).
    """
    v = model.state_dim
    U = model.drift_jet(x_c, t, 1)[0]
    A = np.eye(v) + h * U[:, 1 : 1 + v]
    B = model.diffusion_jet(x_c, t, 0)[0, :, :, 0]
    if noise is None:
        m1, m2 = np.zeros(model.noise_dim), h * np.eye(model.noise_dim)
    else:
        m1, m2 = _noise_first_second(noise, h)
    mean = A @ state.mean + B @ m1
    cross = np.outer(A @ state.mean, B @ m1)
    S = A @ state.second_moment @ A.T + cross + cross.T + B @ m2 @ B.T
    return LinearNoiseState(mean, S)


def solution_moment(central, table: MomentTable, r: Sequence[int]) -> float:
    """``E[X^r]`` from the central state and the effective-noise table."""
    r = MultiIndex(r)
    if r.order > table.order:
        raise ConfigError(f"moment order {r.order} exceeds the table order {table.order}")
    x_c = np.asarray(central, dtype=float)
    return float(
        sum(binomial(r, rp) * monomial(x_c, r - rp) * table[rp] for rp in lower_set(r))
    )


def solution_moments(central, table: MomentTable) -> np.ndarray:
    """All raw moments ``E[X^r]``, ``|r| <= N``, in table order."""
    return np.array([solution_moment(central, table, r) for r in table.indices])


def mean_and_covariance(central, table: MomentTable) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of ``X`` computed from central moments of the table.

    Works from the effective noise directly, which avoids cancellation when
    the state is large compared with its spread.
    """
    if table.order < 2:
        raise ConfigError("covariance needs a table of order >= 2")
    v = table.dim
    unit = [MultiIndex.unit(v, k) for k in range(v)]
    m = np.array([table[e] for e in unit])
    S = np.array([[table[a + b] for b in unit] for a in unit])
    return np.asarray(central, dtype=float) + m, S - np.outer(m, m)


# -- compiled batch engine --------------------------------------------------------


class ExpansionPlan:
    """Pre-expanded moment update for fixed ``(v, d, N, h, truncation)``.

    The coefficient of every update-polynomial monomial is gathered into an
    array ``C`` of shape ``(B, v, M)``; each surviving term of the product
    expansion is a product of at most ``N`` entries of ``C`` times a noise
    moment, a multinomial count and a previous-table entry.
    """

    def __init__(self, v: int, d: int, N: int, h: float, noise: NoiseModel, truncation: str = "state"):
        _check_order(N)
        _check_rule(truncation)
        if noise.dim != d:
            raise ConfigError(f"noise dimension {noise.dim} does not match the model ({d})")
        self.v, self.d, self.N, self.h = v, d, N, float(h)
        self.truncation = truncation
        self.indices = enumerate_up_to(v, N)
        self.n_table = len(self.indices)
        self.lower = enumerate_up_to(v, N - 1)
        pos = index_map(v, N)

        zero_s = MultiIndex.zero(d)
        monomials = [(zero_s, a) for a in self.indices[1:]]
        for j in range(d):
            monomials += [(MultiIndex.unit(d, j), a) for a in self.lower]
        self.monomials = monomials
        self.n_monomials = M = len(monomials)
        self.inv_fact_drift = np.array([1.0 / factorial(a) for a in self.indices])
        self.inv_fact_diff = np.array([1.0 / factorial(a) for a in self.lower])
        self.identity_slot = [pos[MultiIndex.unit(v, k)] - 1 for k in range(v)]

        targets, factors_k, factors_m, weights, sources = [], [], [], [], []
        noise_cache: dict = {}
        for t_idx, r in enumerate(self.indices):
            if t_idx == 0:
                continue
            per_component = []
            for k, power in enumerate(r):
                choices = []
                for combo in itertools.combinations_with_replacement(range(M), power):
                    count = math.factorial(power)
                    for m in set(combo):
                        count //= math.factorial(combo.count(m))
                    choices.append((k, combo, count))
                per_component.append(choices)
            for selection in itertools.product(*per_component):
                s = zero_s
                rp = MultiIndex.zero(v)
                mult = 1
                fk, fm = [], []
                for k, combo, count in selection:
                    mult *= count
                    for m in combo:
                        s = s + monomials[m][0]
                        rp = rp + monomials[m][1]
                        fk.append(k)
                        fm.append(m)
                if not _keep(s.order, rp.order, N, truncation):
                    continue
                if s not in noise_cache:
                    noise_cache[s] = noise.increment_moment(s, h)
                moment = noise_cache[s]
                if moment == 0.0:
                    continue
                pad = N - len(fk)
                targets.append(t_idx)
                factors_k.append(fk + [0] * pad)
                factors_m.append(fm + [M] * pad)  # slot M holds the constant 1
                weights.append(mult * moment)
                sources.append(pos[rp])
        self.n_terms = len(targets)
        self.factor_k = np.array(factors_k, dtype=np.intp).reshape(-1, N)
        self.factor_m = np.array(factors_m, dtype=np.intp).reshape(-1, N)
        self.weights = np.array(weights, dtype=float)
        self.sources = np.array(sources, dtype=np.intp)
        self.targets = np.array(targets, dtype=np.intp)
        self.scatter = sparse.csr_matrix(
            (np.ones(self.n_terms), (np.arange(self.n_terms), self.targets)),
            shape=(self.n_terms, self.n_table),
        )
        self.noise_m1, self.noise_m2 = _noise_first_second(noise, h)

    def coefficients(self, drift_jet: np.ndarray, diffusion_jet: np.ndarray) -> np.ndarray:
        """Monomial coefficients ``(B, v, M)`` from drift/diffusion jets."""
        B = drift_jet.shape[0]
        pure = self.h * drift_jet[:, :, 1:] * self.inv_fact_drift[1:]
        noisy = (diffusion_jet * self.inv_fact_diff).reshape(B, self.v, -1)
        C = np.concatenate([pure, noisy], axis=2)
        C[:, np.arange(self.v), self.identity_slot] += 1.0
        return C

    def step(self, tables: np.ndarray, C: np.ndarray) -> np.ndarray:
        """Advance a batch of tables ``(B, n_table)`` given coefficients ``C``."""
        B = C.shape[0]
        ext = np.concatenate([C, np.ones((B, self.v, 1))], axis=2)
        terms = ext[:, self.factor_k, self.factor_m].prod(axis=2)
        terms *= self.weights
        terms *= tables[:, self.sources]
        out = np.asarray(self.scatter.T.dot(terms.T).T)
        out[:, 0] = 1.0
        return out


@dataclass
class BatchState:
    """State of ``B`` independent propagations at one time level."""

    time: float
    central: np.ndarray  # (B, v)
    tables: np.ndarray  # (B, n_table)
    linear_mean: np.ndarray  # (B, v)
    linear_second: np.ndarray  # (B, v, v)


ENGINES = ("auto", "numpy", "numba")


def _compiled_kernel(model: SdeModel, N: int, engine: str):
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r}")
    if engine == "numpy":
        return None
    kernel = model.numba_kernel() if N <= model.max_derivative_order else None
    if kernel is None and engine == "numba":
        raise ConfigError(
            f"the compiled engine is unavailable for this model at order {N}"
        )
    return kernel


def propagate_batch(
    X0,
    model: SdeModel,
    noise: NoiseModel,
    h: float,
    n_steps: int,
    N: int,
    t0: float = 0.0,
    truncation: str = "state",
    plan: Optional[ExpansionPlan] = None,
    stride: Optional[int] = None,
    engine: str = "auto",
) -> tuple[BatchState, list[BatchState]]:
    """Propagate ``B`` fixed initial states through ``n_steps`` steps.

    Returns the final state and, when ``stride`` is given, the list of
    states at steps ``0, stride, 2 stride, ...`` (always including the last).
    ``engine="auto"`` uses the compiled kernel when the model provides one
    for order ``N`` and falls back to vectorized numpy otherwise.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    B, v = X0.shape
    if v != model.state_dim:
        raise ConfigError(f"initial state has dimension {v}, model expects {model.state_dim}")
    kernel = _compiled_kernel(model, N, engine)
    if plan is None:
        plan = ExpansionPlan(v, model.noise_dim, N, h, noise, truncation)

    x_c = X0.copy()
    tables = np.zeros((B, plan.n_table))
    tables[:, 0] = 1.0
    lin_m = np.zeros((B, v))
    lin_S = np.zeros((B, v, v))
    history = []

    def snapshot(step):
        return BatchState(t0 + step * h, x_c.copy(), tables.copy(), lin_m.copy(), lin_S.copy())

    if stride:
        history.append(snapshot(0))
    advance = _numpy_advance if kernel is None else _compiled_advance
    n = 0
    while n < n_steps:
        stop = min(n_steps, (n // LOG_EVERY + 1) * LOG_EVERY)
        if stride:
            stop = min(stop, (n // stride + 1) * stride)
        advance(model, plan, kernel, x_c, tables, lin_m, lin_S, n + 1, stop - n, h, t0)
        n = stop
        if n % LOG_EVERY == 0:
            logger.info("step %d/%d t=%.6g", n, n_steps, t0 + n * h)
        if stride and (n % stride == 0 or n == n_steps):
            history.append(snapshot(n))
    return snapshot(n_steps), history


def _numpy_advance(model, plan, kernel, x_c, tables, lin_m, lin_S, first, count, h, t0):
    v, N = plan.v, plan.N
    eye = np.eye(v)
    m1, m2 = plan.noise_m1, plan.noise_m2
    for n in range(first, first + count):
        t = t0 + (n - 1) * h
        try:
            U = model.drift_jet(x_c, t, N)
            G = model.diffusion_jet(x_c, t, N - 1)
        except NumericalError as exc:
            raise NumericalError(f"model evaluation failed: {exc}", step=n) from exc
        C = plan.coefficients(U, G)
        tables[:] = plan.step(tables, C)

        A = eye + h * U[:, :, 1 : 1 + v]
        Bm = G[:, :, :, 0]
        drift_m = np.einsum("bij,bj->bi", A, lin_m)
        kick = Bm @ m1
        cross = np.einsum("bi,bj->bij", drift_m, kick)
        lin_S[:] = (
            A @ lin_S @ A.transpose(0, 2, 1)
            + cross
            + cross.transpose(0, 2, 1)
            + Bm @ m2 @ Bm.transpose(0, 2, 1)
        )
        lin_m[:] = drift_m + kick
        x_c += h * U[:, :, 0]

        finite = np.isfinite(tables).all(axis=1) & np.isfinite(x_c).all(axis=1)
        if not finite.all():
            bad = int(np.flatnonzero(~finite)[0])
            raise NumericalError("non-finite values in the propagation", step=n, sample=bad)


def _compiled_advance(model, plan, kernel, x_c, tables, lin_m, lin_S, first, count, h, t0):
    from . import _kernels

    jet_id, params = kernel
    status, step, sample = _kernels.run_plan(
        x_c, tables, lin_m, lin_S, first, count, h, t0, jet_id, params, plan.N,
        len(plan.indices), len(plan.lower), plan.factor_k, plan.factor_m, plan.weights,
        plan.sources, plan.targets, np.asarray(plan.identity_slot, dtype=np.intp),
        plan.inv_fact_drift, plan.inv_fact_diff, plan.noise_m1, plan.noise_m2,
    )
    if status == _kernels.SINGULAR:
        raise NumericalError("model evaluation failed (singular state)", step=step, sample=sample)
    if status == _kernels.NONFINITE:
        raise NumericalError("non-finite values in the propagation", step=step, sample=sample)


@dataclass
class FixedPropagation:
    """Result of :func:`propagate_fixed`.

    ``tables`` and ``linear`` hold the stored levels (only the final one
    unless a trajectory stride was requested); ``central`` holds the
    matching central-path states. Unpacks as ``(central, tables, linear)``.
    """

    central: CentralPath
    tables: list[MomentTable]
    linear: list[LinearNoiseState]
    n_steps: int
    steps: list[int] = field(default_factory=list)

    def __iter__(self) -> Iterator:
        return iter((self.central, self.tables, self.linear))

    @property
    def final_state(self) -> np.ndarray:
        return self.central.states[-1]

    @property
    def final_table(self) -> MomentTable:
        return self.tables[-1]

    @property
    def final_linear(self) -> LinearNoiseState:
        return self.linear[-1]

    def mean_and_covariance(self) -> tuple[np.ndarray, np.ndarray]:
        return mean_and_covariance(self.final_state, self.final_table)

    def solution_moments(self) -> np.ndarray:
        return solution_moments(self.final_state, self.final_table)


def propagate_fixed(
    x0,
    model: SdeModel,
    noise: NoiseModel,
    h: float,
    t0: float,
    tn: float,
    N: int,
    truncation: str = "state",
    stride: Optional[int] = None,
    engine: str = "auto",
) -> FixedPropagation:
    """Central path, effective-noise moments and linear state from a fixed ``x0``."""
    n_steps = step_count(t0, tn, h)
    final, history = propagate_batch(
        np.asarray(x0, dtype=float)[None, :], model, noise, h, n_steps, N, t0, truncation,
        stride=stride, engine=engine,
    )
    levels = history if stride else [final]
    v = model.state_dim
    central = CentralPath(
        np.array([lv.time for lv in levels]), np.array([lv.central[0] for lv in levels])
    )
    tables = [MomentTable(N, v, lv.tables[0]) for lv in levels]
    linear = [LinearNoiseState(lv.linear_mean[0], lv.linear_second[0]) for lv in levels]
    steps = [int(round((lv.time - t0) / h)) for lv in levels]
    return FixedPropagation(central, tables, linear, n_steps, steps)


def bound_recursion(
    x0,
    model: SdeModel,
    noise: NoiseModel,
    h: float,
    n: int,
    N: int,
    P: float,
    t0: float = 0.0,
) -> np.ndarray:
    """Upper bounds on ``|dW_eff^(k)_n|`` holding with the given probability.

    Returns an array of shape ``(n + 1, v)`` whose row ``m`` bounds the
    effective noise after ``m`` steps, starting from zero.
    """
    _check_order(N)
    v, d = model.state_dim, model.noise_dim
    A = np.array([noise.quantile_bound(j, P, h) for j in range(d)])
    drift_idx = np.array(enumerate_up_to(v, N), dtype=float)
    diff_idx = np.array(enumerate_up_to(v, N - 1), dtype=float)
    inv_fd = np.array([1.0 / factorial(a) for a in enumerate_up_to(v, N)])
    inv_fg = np.array([1.0 / factorial(a) for a in enumerate_up_to(v, N - 1)])
    x_c = np.asarray(x0, dtype=float)
    bound = np.zeros(v)
    out = np.zeros((n + 1, v))
    for m in range(1, n + 1):
        t = t0 + (m - 1) * h
        U = np.abs(model.drift_jet(x_c, t, N)[0])
        G = np.abs(model.diffusion_jet(x_c, t, N - 1)[0])
        pw_d = np.prod(bound**drift_idx, axis=1)
        pw_g = np.prod(bound**diff_idx, axis=1)
        increase = h * (U[:, 1:] * inv_fd[1:] * pw_d[1:]).sum(axis=1)
        increase += np.einsum("kjq,q,q,j->k", G, inv_fg, pw_g, A)
        bound = bound + increase
        x_c = x_c + h * model.drift(x_c, t)
        out[m] = bound
    return out


# -- trajectory output ------------------------------------------------------------

CSV_VERSION = "# sdemoments-csv v1"


def write_trajectory_csv(result: FixedPropagation, moments_path, central_path) -> None:
    """Dump stored moment tables and central states as long-format CSV."""
    with open(moments_path, "w", newline="") as fh:
        fh.write(CSV_VERSION + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "multiindex", "value"])
        for time, table in zip(result.central.times, result.tables):
            for r, value in zip(table.indices, table.values):
                writer.writerow([repr(float(time)), str(r), repr(float(value))])
    with open(central_path, "w", newline="") as fh:
        fh.write(CSV_VERSION + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "component", "value"])
        for time, state in zip(result.central.times, result.central.states):
            for k, value in enumerate(state):
                writer.writerow([repr(float(time)), k, repr(float(value))])
