"""Non-intrusive polynomial chaos over a Gaussian initial condition.

The random initial state ``X0 ~ N(mean, cov)`` is whitened with the
symmetric inverse square root of ``cov``; the basis is the tensor product of
normalized probabilists' Hermite polynomials ``He_a(xi) / sqrt(a!)`` over the
whitened coordinates, with total degree at most ``order``. The basis is
orthonormal under the law of ``X0`` and its first element is the constant 1,
so the expectation of a fitted quantity is its first coefficient.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericalError, RankDeficiencyError
from .models import InitialCondition, NoiseModel, SdeModel
from .multiindex import MultiIndex, binomial, enumerate_up_to, factorial, lower_set
from .propagation import BatchState, ExpansionPlan, propagate_batch, step_count

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e10


def hermite_table(x, order: int) -> np.ndarray:
    """``He_0(x), ..., He_order(x)`` stacked on a new last axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (order + 1,))
    out[..., 0] = 1.0
    if order >= 1:
        out[..., 1] = x
    for n in range(1, order):
        out[..., n + 1] = x * out[..., n] - n * out[..., n - 1]
    return out


def hermite(r: int, x):
    """Probabilists' Hermite polynomial ``He_r`` via the three-term recurrence."""
    if r < 0:
        raise ValueError("Hermite order must be >= 0")
    value = hermite_table(x, r)[..., r]
    return float(value) if np.ndim(value) == 0 else value


@dataclass
class PceBasis:
    """Orthonormal Hermite basis for ``N(mean, covariance)`` in ``dim`` variables."""

    dim: int
    order: int
    mean: np.ndarray
    covariance: np.ndarray
    whitening: np.ndarray

    @property
    def indices(self) -> tuple[MultiIndex, ...]:
        return enumerate_up_to(self.dim, self.order)

    @property
    def basis_size(self) -> int:
        return len(self.indices)

    def whiten(self, samples) -> np.ndarray:
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        return (samples - self.mean) @ self.whitening

    def evaluate_all(self, samples) -> np.ndarray:
        """Basis values at ``samples`` (shape ``(n, dim)``), shape ``(n, N_p)``."""
        xi = self.whiten(samples)
        H = hermite_table(xi, self.order)  # (n, dim, order + 1)
        exps = np.array(self.indices)  # (N_p, dim)
        cols = H[:, np.arange(self.dim)[None, :], exps]  # (n, N_p, dim)
        norms = np.array([math.sqrt(factorial(a)) for a in self.indices])
        return cols.prod(axis=2) / norms

    def evaluate(self, i: int, x0) -> float:
        return float(self.evaluate_all(np.asarray(x0, dtype=float)[None, :])[0, i])


def build_gaussian_basis(mean, covariance, order: int) -> PceBasis:
    """Orthonormal basis for a Gaussian with positive-definite ``covariance``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    if order < 0:
        raise ConfigError("PCE order must be >= 0")
    if cov.shape != (mean.size, mean.size):
        raise ConfigError(f"covariance shape {cov.shape} does not match the mean")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("PCE covariance is not positive definite") from exc
    w, V = np.linalg.eigh(cov)
    whitening = (V / np.sqrt(w)) @ V.T
    return PceBasis(mean.size, order, mean, cov, whitening)


def design_matrix(basis: PceBasis, samples) -> np.ndarray:
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < basis.basis_size:
        raise ConfigError(
            f"need at least {basis.basis_size} samples for the PCE fit, got {samples.shape[0]}"
        )
    return basis.evaluate_all(samples)


@dataclass
class PceFit:
    """Least-squares PCE coefficients.

    ``coefficients`` has shape ``(N_p,)`` for one target or ``(N_p, T)``
    when several targets share the design matrix.
    """

    coefficients: np.ndarray
    condition_number: float
    residual_norm: np.ndarray

    def predict(self, phi: np.ndarray) -> np.ndarray:
        """Surrogate values from basis values ``phi`` of shape ``(n, N_p)``."""
        return phi @ self.coefficients


def fit_least_squares(matrix, targets, max_condition: float = MAX_CONDITION) -> PceFit:
    """Minimize ``||targets - matrix c||`` with an SVD-based solver."""
    A = np.asarray(matrix, dtype=float)
    y = np.asarray(targets, dtype=float)
    if y.shape[0] != A.shape[0]:
        raise ConfigError("target count does not match the design matrix rows")
    if not np.all(np.isfinite(y)):
        bad = np.flatnonzero(~np.isfinite(y.reshape(y.shape[0], -1)).all(axis=1))
        raise NumericalError("non-finite PCE fit target", sample=int(bad[0]))
    coef, _, _, sv = np.linalg.lstsq(A, y, rcond=None)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if cond > max_condition:
        raise RankDeficiencyError("PCE design matrix is rank deficient", cond)
    residual = np.linalg.norm(y - A @ coef, axis=0)
    return PceFit(coef, cond, residual)


def aggregate_moment(fit: PceFit):
    """Expectation of the fitted quantity: the constant-mode coefficient."""
    c = fit.coefficients[0]
    return float(c) if np.ndim(c) == 0 else c


def solution_moments_batch(central: np.ndarray, tables: np.ndarray, N: int) -> np.ndarray:
    """Raw moments ``E[X^r | X0]`` for a batch, shape ``(B, n_table)``."""
    v = central.shape[1]
    indices = enumerate_up_to(v, N)
    pos = {r: i for i, r in enumerate(indices)}
    out = np.zeros_like(tables)
    for p, r in enumerate(indices):
        for rp in lower_set(r):
            power = np.prod(central ** np.array(r - rp, dtype=float), axis=1)
            out[:, p] += binomial(r, rp) * power * tables[:, pos[rp]]
    return out


def conditional_mean_cov(state: BatchState, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample mean ``(B, v)`` and covariance ``(B, v, v)`` from the tables."""
    B, v = state.central.shape
    pos = {r: i for i, r in enumerate(enumerate_up_to(v, N))}
    unit = [MultiIndex.unit(v, k) for k in range(v)]
    m = state.tables[:, [pos[e] for e in unit]]
    if N >= 2:
        S = np.stack(
            [state.tables[:, [pos[a + b] for b in unit]] for a in unit], axis=1
        )
    else:
        S = state.linear_second
    return state.central + m, S - np.einsum("bi,bj->bij", m, m)


@dataclass
class RandomPropagation:
    """Result of :func:`propagate_random`."""

    order: int
    samples: np.ndarray
    basis: PceBasis
    final: BatchState
    conditional_moments: np.ndarray  # (N_s, n_table)
    fit: PceFit
    mean: np.ndarray
    covariance: np.ndarray
    n_steps: int

    @property
    def indices(self) -> tuple[MultiIndex, ...]:
        return enumerate_up_to(self.basis.dim, self.order)

    @property
    def moments(self) -> dict[MultiIndex, float]:
        agg = aggregate_moment(self.fit)
        return {r: float(c) for r, c in zip(self.indices, np.atleast_1d(agg))}


def propagate_random(
    init: InitialCondition,
    model: SdeModel,
    noise: NoiseModel,
    h: float,
    t0: float,
    tn: float,
    N: int,
    N_PCE: int,
    N_s: int,
    seed: int,
    truncation: str = "state",
    samples: Optional[np.ndarray] = None,
    engine: str = "auto",
) -> RandomPropagation:
    """Moments of ``X_n`` for a Gaussian initial condition via PCE aggregation.

    ``N_s`` initial states are drawn with ``numpy.random.default_rng(seed)``
    (or taken from ``samples``), each is propagated from a fixed start, and
    every conditional raw moment is regressed on the basis. The aggregated
    covariance uses the law of total covariance: the aggregated conditional
    covariance plus the spread of the fitted conditional mean, which is
    ``sum_{i>0} c_i c_i^T`` for an orthonormal basis.
    """
    if init.kind != "gaussian":
        raise ConfigError("propagate_random needs a gaussian initial condition")
    basis = build_gaussian_basis(init.mean, init.covariance, N_PCE)
    if samples is None:
        if N_s < basis.basis_size:
            raise ConfigError(f"N_s={N_s} is below the basis size {basis.basis_size}")
        samples = init.sample(np.random.default_rng(seed), N_s)
    phi = design_matrix(basis, samples)
    n_steps = step_count(t0, tn, h)
    plan = ExpansionPlan(model.state_dim, model.noise_dim, N, h, noise, truncation)
    try:
        final, _ = propagate_batch(
            samples, model, noise, h, n_steps, N, t0, truncation, plan, engine=engine
        )
    except NumericalError as exc:
        raise NumericalError(f"random-start propagation failed: {exc}", exc.step, exc.sample) from exc
    raw = solution_moments_batch(final.central, final.tables, N)
    fit = fit_least_squares(phi, raw)

    cond_mean, cond_cov = conditional_mean_cov(final, N)
    v = model.state_dim
    mean_fit = fit_least_squares(phi, cond_mean)
    cov_fit = fit_least_squares(phi, cond_cov.reshape(len(samples), v * v))
    c = mean_fit.coefficients
    covariance = cov_fit.coefficients[0].reshape(v, v) + c[1:].T @ c[1:]
    covariance = 0.5 * (covariance + covariance.T)
    logger.info("PCE fit: N_p=%d, condition number %.3e", basis.basis_size, fit.condition_number)
    return RandomPropagation(
        N, samples, basis, final, raw, fit, c[0].copy(), covariance, n_steps
    )
