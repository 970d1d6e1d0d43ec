"""Gram-Charlier type A reconstruction of one-dimensional marginal densities.

For a scalar ``X`` with auxiliary Gaussian ``N(mu, sigma^2)``::

    f(x) = [1 + sum_{r=1}^{N} C_r / (r! sigma^r) He_r((x - mu) / sigma)] phi(x; mu, sigma)

with ``C_r`` the complete Bell polynomial of the cumulant differences
``(k1 - mu, k2 - sigma^2, k3, ..., kr)``. The series has unit mass for any
coefficients but may be negative in the tails.

``mu`` and ``sigma`` come from the order-1 (linear) effective noise, while
the cumulants come from the order-``N`` moment table. For a random initial
state the three kinds of parameters are fitted as PCE surrogates and the
marginal is the average of the conditional densities over fresh draws of
``X0``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
import numpy as np

from .errors import ConfigError, DegenerateDensityError
from .multiindex import MultiIndex, enumerate_up_to
from .pce import PceBasis, PceFit, fit_least_squares, hermite, hermite_table
from .propagation import BatchState, FixedPropagation, LinearNoiseState, MomentTable

__all__ = [
    "hermite",
    "moments_to_cumulants",
    "cumulants_to_moments",
    "complete_bell",
    "gc_coefficients",
    "GcDensity",
    "gc_pdf",
    "auxiliary_params",
    "fixed_density",
    "density_parameters",
    "DensitySurrogates",
    "fit_density_surrogates",
    "mixture_pdf",
    "tvd",
]

logger = logging.getLogger(__name__)

MAX_SKIPPED_FRACTION = 0.01
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def moments_to_cumulants(moments) -> np.ndarray:
    """Cumulants ``k1..kN`` from raw moments ``m1..mN`` (last axis)."""
    m = np.asarray(moments, dtype=float)
    N = m.shape[-1]
    if N < 1:
        raise ValueError("need at least one moment")
    kappa = np.zeros_like(m)
    for r in range(1, N + 1):
        acc = m[..., r - 1].copy()
        for i in range(1, r):
            acc -= math.comb(r - 1, i - 1) * kappa[..., i - 1] * m[..., r - i - 1]
        kappa[..., r - 1] = acc
    return kappa


def _bell_sequence(x: np.ndarray, order: int) -> np.ndarray:
    """``B_0..B_order`` of the leading arguments of ``x`` (last axis)."""
    out = np.zeros(x.shape[:-1] + (order + 1,))
    out[..., 0] = 1.0
    for n in range(order):
        acc = np.zeros(x.shape[:-1])
        for i in range(n + 1):
            acc += math.comb(n, i) * out[..., n - i] * x[..., i]
        out[..., n + 1] = acc
    return out


def complete_bell(r: int, x):
    """Complete Bell polynomial ``B_r(x_1, ..., x_r)``."""
    if r < 0:
        raise ValueError("Bell order must be >= 0")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < r:
        raise ValueError(f"B_{r} needs {r} arguments, got {x.shape[-1]}")
    value = _bell_sequence(x, r)[..., r]
    return float(value) if np.ndim(value) == 0 else value


def cumulants_to_moments(kappa) -> np.ndarray:
    """Raw moments ``m1..mN`` from cumulants, ``m_r = B_r(k1..kr)``."""
    kappa = np.asarray(kappa, dtype=float)
    return _bell_sequence(kappa, kappa.shape[-1])[..., 1:]


def gc_coefficients(solution_moments, mu, sigma, center=None) -> np.ndarray:
    """Gram-Charlier coefficients ``C_1..C_N``.

    Parameters
    ----------
    solution_moments : array_like
        Moments ``E[(X - center)^r]`` for ``r = 1..N`` (last axis).
    mu, sigma : float or array_like
        Auxiliary Gaussian parameters.
    center : float or array_like, optional
        Point the moments are taken about; 0 (raw moments) by default.
        Cumulants above the first are shift invariant, so moments about a
        point near ``mu`` avoid cancellation when ``|mu| >> sigma``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise DegenerateDensityError("auxiliary standard deviation must be positive")
    kappa = moments_to_cumulants(solution_moments)
    shift = (0.0 if center is None else np.asarray(center, dtype=float)) - np.asarray(mu, dtype=float)
    diff = kappa.copy()
    diff[..., 0] += shift
    if diff.shape[-1] >= 2:
        diff[..., 1] -= sigma**2
    return _bell_sequence(diff, diff.shape[-1])[..., 1:]


@dataclass(frozen=True)
class GcDensity:
    """Gram-Charlier type A density about ``N(mu, sigma^2)``."""

    mu: float
    sigma: float
    coefficients: np.ndarray

    def __post_init__(self):
        if not self.sigma > 0:
            raise DegenerateDensityError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "coefficients", np.atleast_1d(np.asarray(self.coefficients, dtype=float)))

    @property
    def order(self) -> int:
        return self.coefficients.size

    def pdf(self, x):
        return _gc_values(
            np.asarray(x, dtype=float)[..., None],
            np.array([self.mu]),
            np.array([self.sigma]),
            self.coefficients[None, :],
        )[..., 0]


def _gc_values(x, mu, sigma, C):
    """Density values for parameter batches; ``x`` broadcasts against ``mu``."""
    N = C.shape[-1]
    u = (x - mu) / sigma
    H = hermite_table(u, N)
    scale = np.array([1.0 / math.factorial(r) for r in range(1, N + 1)])
    series = 1.0 + np.sum(C * scale * H[..., 1:] / sigma[..., None] ** np.arange(1, N + 1), axis=-1)
    return series * np.exp(-0.5 * u * u) / (_SQRT_2PI * sigma)


def gc_pdf(density: GcDensity, x):
    """Evaluate the (possibly negative) Gram-Charlier density."""
    value = density.pdf(x)
    return float(value) if np.ndim(value) == 0 else value


def auxiliary_params(linear_state: LinearNoiseState, central, k: int, tol: float = 1e-12) -> tuple[float, float]:
    """Auxiliary Gaussian ``(mu, sigma)`` of component ``k`` from the linear state."""
    m = float(linear_state.mean[k])
    var = float(linear_state.second_moment[k, k]) - m * m
    if var < -tol:
        raise DegenerateDensityError(f"negative auxiliary variance {var:.3e} for component {k}")
    if var <= 0.0:
        raise DegenerateDensityError(f"component {k} has a degenerate (zero-variance) auxiliary")
    return float(np.asarray(central)[k]) + m, math.sqrt(var)


def _centered_powers(table_values, v: int, N: int, k: int, offset) -> np.ndarray:
    """``E[(dW_k - offset)^p]`` for p = 1..N from tables ``(..., n_table)``."""
    pos = {r: i for i, r in enumerate(enumerate_up_to(v, N))}
    e = MultiIndex.unit(v, k)
    raw = [table_values[..., 0]]
    r = MultiIndex.zero(v)
    for _ in range(N):
        r = r + e
        raw.append(table_values[..., pos[r]])
    out = []
    for p in range(1, N + 1):
        acc = 0.0
        for i in range(p + 1):
            acc = acc + math.comb(p, i) * raw[i] * (-offset) ** (p - i)
        out.append(acc)
    return np.stack(out, axis=-1)


def fixed_density(result: FixedPropagation, k: int) -> GcDensity:
    """Marginal of component ``k`` at the final time for a fixed start."""
    table: MomentTable = result.final_table
    lin = result.final_linear
    mu, sigma = auxiliary_params(lin, result.final_state, k)
    moments = _centered_powers(table.values, table.dim, table.order, k, float(lin.mean[k]))
    C = gc_coefficients(moments, mu, sigma, center=mu)
    return GcDensity(mu, sigma, C)


def density_parameters(state: BatchState, N: int, tol: float = 1e-12):
    """Per-sample ``mu``, ``sigma`` ``(B, v)`` and ``C`` ``(B, v, N)``.

    Samples whose auxiliary variance is not positive get ``sigma = 0`` and
    zero coefficients; the caller decides how to treat them.
    """
    B, v = state.central.shape
    m = state.linear_mean
    var = np.einsum("bkk->bk", state.linear_second) - m * m
    if np.any(var < -tol):
        raise DegenerateDensityError("negative auxiliary variance in the linear state")
    sigma = np.sqrt(np.clip(var, 0.0, None))
    mu = state.central + m
    C = np.zeros((B, v, N))
    ok = sigma > 0
    for k in range(v):
        moments = _centered_powers(state.tables, v, N, k, m[:, k])
        good = ok[:, k]
        if good.any():
            C[good, k] = gc_coefficients(
                moments[good], mu[good, k], sigma[good, k], center=mu[good, k]
            )
    return mu, sigma, C


@dataclass
class DensitySurrogates:
    """PCE surrogates of ``mu``, ``sigma`` and ``C_1..C_N`` for every component."""

    basis: PceBasis
    order: int
    fit: PceFit  # targets laid out as [mu (v), sigma (v), C (v * N)]

    def evaluate(self, samples) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        phi = self.basis.evaluate_all(samples)
        pred = self.fit.predict(phi)
        v, N = self.basis.dim, self.order
        return pred[:, :v], pred[:, v : 2 * v], pred[:, 2 * v :].reshape(-1, v, N)


def fit_density_surrogates(samples, mu, sigma, C, basis: PceBasis) -> DensitySurrogates:
    """Least-squares PCE fits of the density parameters over the ``X0`` samples."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    C = np.asarray(C, dtype=float)
    n, v, N = C.shape
    targets = np.concatenate([mu, sigma, C.reshape(n, v * N)], axis=1)
    phi = basis.evaluate_all(samples)
    if phi.shape[0] < basis.basis_size:
        raise ConfigError("fewer samples than basis functions")
    return DensitySurrogates(basis, N, fit_least_squares(phi, targets))


@dataclass
class MixtureResult:
    values: np.ndarray
    skipped: int
    used: int


def mixture_pdf(
    surrogates: DensitySurrogates,
    fresh_samples,
    k: int,
    x,
    chunk: int = 2048,
    max_skipped_fraction: float = MAX_SKIPPED_FRACTION,
) -> MixtureResult:
    """Average of conditional Gram-Charlier densities over fresh ``X0`` draws.

    Draws whose surrogate ``sigma`` is not positive are skipped and counted.
    More than ``max_skipped_fraction`` skipped draws, or all of them, raise
    :class:`DegenerateDensityError`.
    """
    fresh = np.atleast_2d(np.asarray(fresh_samples, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    total = np.zeros_like(x)
    skipped = 0
    for start in range(0, fresh.shape[0], chunk):
        mu, sigma, C = surrogates.evaluate(fresh[start : start + chunk])
        mu, sigma, C = mu[:, k], sigma[:, k], C[:, k, :]
        good = sigma > 0
        skipped += int((~good).sum())
        if good.any():
            vals = _gc_values(x[:, None], mu[good], sigma[good], C[good])
            total += vals.sum(axis=1)
    n = fresh.shape[0]
    used = n - skipped
    if used == 0:
        raise DegenerateDensityError(f"all {n} mixture components have non-positive sigma")
    if skipped > max_skipped_fraction * n:
        raise DegenerateDensityError(
            f"{skipped} of {n} mixture components have non-positive sigma"
        )
    if skipped:
        logger.warning("skipped %d of %d mixture components with sigma <= 0", skipped, n)
    return MixtureResult(total / used, skipped, used)


def tvd(f, g, grid) -> float:
    """Total variation distance ``0.5 * int |f - g|`` by the trapezoid rule."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if f.shape != grid.shape or g.shape != grid.shape:
        raise ValueError("densities must be tabulated on the same grid")
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    return 0.5 * float(np.trapezoid(np.abs(f - g), grid))

