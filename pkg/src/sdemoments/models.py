"""SDE models, driving-noise models and initial conditions.

A model supplies the drift ``u(x, t)`` (length ``v``), the diffusion
``G(x, t)`` (``v x d``) and their partial derivatives with respect to the
state. The propagation engine consumes derivatives in bulk through
*jets*: ``drift_jet(X, t, order)`` returns every ``d^r u_k / dx^r`` with
``|r| <= order`` for a batch of states ``X`` of shape ``(B, v)``, laid out
as ``(B, v, n_idx)`` where the last axis follows
:func:`sdemoments.multiindex.enumerate_up_to`. ``diffusion_jet`` is the
same with shape ``(B, v, d, n_idx)``.

Subclasses implement ``_drift_jet``/``_diffusion_jet`` up to
``max_derivative_order``; higher orders are filled in by nested central
finite differences of the highest analytic order. The finite-difference
step for a nest of depth ``q`` is ``eps**(1/(q+2))`` times the per-component
state scale, which balances truncation against round-off but still loses
several digits per nest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special, stats

from .errors import ConfigError, NumericalError
from .multiindex import MAX_ORDER, MultiIndex, enumerate_up_to, index_map

KEPLER_MU = 3.986e5
"""Earth gravitational parameter in km^3/s^2 (default)."""

KEPLER_MU_TABLE2 = 3.986
"""The literal value printed in the experiment parameter table (km^3/s^2)."""

EARTH_RADIUS = 6378.137
"""Equatorial Earth radius in km (6.378e3 to four figures)."""


def _as_batch(X, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ConfigError(f"expected states of shape (B, {dim}), got {X.shape}")
    return X


class SdeModel:
    """Base class for an Ito SDE ``dX = u(X,t) dt + G(X,t) dW``.

    Parameters
    ----------
    state_dim : int
        Dimension ``v`` of the state.
    noise_dim : int
        Dimension ``d`` of the driving noise.
    max_derivative_order : int
        Largest ``|r|`` available analytically; beyond it derivatives are
        finite-differenced.
    """

    name = "custom"

    def __init__(self, state_dim: int, noise_dim: int, max_derivative_order: int):
        if state_dim < 1 or noise_dim < 1:
            raise ConfigError("state_dim and noise_dim must be >= 1")
        self.state_dim = int(state_dim)
        self.noise_dim = int(noise_dim)
        self.max_derivative_order = int(max_derivative_order)

    # -- to be provided by subclasses -------------------------------------
    def _drift_jet(self, X: np.ndarray, t: float, order: int) -> np.ndarray:
        raise NotImplementedError

    def _diffusion_jet(self, X: np.ndarray, t: float, order: int) -> np.ndarray:
        raise NotImplementedError

    def numba_kernel(self):
        """``(jet_id, params)`` for the compiled engine, or ``None``."""
        return None

    def state_scale(self, X: np.ndarray) -> np.ndarray:
        """Per-component length scale used for finite-difference steps."""
        return np.maximum(np.abs(X), 1.0)

    # -- public pointwise API ---------------------------------------------
    def drift(self, x, t: float) -> np.ndarray:
        return self.drift_jet(x, t, 0)[0, :, 0]

    def diffusion(self, x, t: float) -> np.ndarray:
        return self.diffusion_jet(x, t, 0)[0, :, :, 0]

    def drift_derivative(self, x, t: float, k: int, r: Sequence[int]) -> float:
        r = MultiIndex(r)
        jet = self.drift_jet(x, t, r.order)
        return float(jet[0, k, index_map(self.state_dim, r.order)[r]])

    def diffusion_derivative(self, x, t: float, k: int, j: int, r: Sequence[int]) -> float:
        r = MultiIndex(r)
        jet = self.diffusion_jet(x, t, r.order)
        return float(jet[0, k, j, index_map(self.state_dim, r.order)[r]])

    # -- bulk API -----------------------------------------------------------
    def drift_jet(self, X, t: float, order: int) -> np.ndarray:
        """All drift derivatives with ``|r| <= order``, shape ``(B, v, n_idx)``."""
        X = _as_batch(X, self.state_dim)
        return self._jet(X, t, order, self._drift_jet)

    def diffusion_jet(self, X, t: float, order: int) -> np.ndarray:
        """All diffusion derivatives with ``|r| <= order``, shape ``(B, v, d, n_idx)``."""
        X = _as_batch(X, self.state_dim)
        return self._jet(X, t, order, self._diffusion_jet)

    def _jet(self, X, t, order, analytic):
        if order < 0:
            raise ValueError("derivative order must be >= 0")
        if order > MAX_ORDER:
            raise ConfigError(f"derivative order {order} exceeds the cap {MAX_ORDER}")
        base = min(order, self.max_derivative_order)
        exact = analytic(X, t, base)
        if order == base:
            return exact
        indices = enumerate_up_to(self.state_dim, order)
        out = np.zeros(exact.shape[:-1] + (len(indices),))
        out[..., : exact.shape[-1]] = exact
        base_map = index_map(self.state_dim, base)
        scale = self.state_scale(X)
        for p in range(exact.shape[-1], len(indices)):
            r = indices[p]
            depth = r.order - base
            steps = scale * np.finfo(float).eps ** (1.0 / (depth + 2))
            out[..., p] = self._nested_difference(X, t, r, base, base_map, steps, analytic)
        return out

    def _nested_difference(self, X, t, r, base, base_map, steps, analytic):
        if r.order <= base:
            return analytic(X, t, base)[..., base_map[r]]
        i = max(k for k, e in enumerate(r) if e > 0)
        lower = r - MultiIndex.unit(self.state_dim, i)
        delta = steps[:, i]
        shift = np.zeros_like(X)
        shift[:, i] = delta
        fp = self._nested_difference(X + shift, t, lower, base, base_map, steps, analytic)
        fm = self._nested_difference(X - shift, t, lower, base, base_map, steps, analytic)
        denom = (2.0 * delta).reshape((-1,) + (1,) * (fp.ndim - 1))
        return (fp - fm) / denom


class LinearModel(SdeModel):
    """Affine drift ``u = a x + b`` with constant diffusion ``sigma``."""

    name = "linear"

    def __init__(self, a, b, sigma):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        v = a.shape[0]
        b = np.asarray(b, dtype=float).reshape(-1)
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim < 2:
            sigma = sigma.reshape(v, -1)
        if a.shape != (v, v) or b.shape != (v,) or sigma.shape[0] != v:
            raise ConfigError(
                f"inconsistent shapes a={a.shape}, b={b.shape}, sigma={sigma.shape}"
            )
        super().__init__(v, sigma.shape[1], MAX_ORDER)
        self.a, self.b, self.sigma = a, b, sigma

    def _drift_jet(self, X, t, order):
        n = len(enumerate_up_to(self.state_dim, order))
        out = np.zeros((X.shape[0], self.state_dim, n))
        out[:, :, 0] = X @ self.a.T + self.b
        if order >= 1:
            out[:, :, 1 : 1 + self.state_dim] = self.a[None, :, :]
        return out

    def _diffusion_jet(self, X, t, order):
        n = len(enumerate_up_to(self.state_dim, order))
        out = np.zeros((X.shape[0], self.state_dim, self.noise_dim, n))
        out[..., 0] = self.sigma
        return out


def linear_model(a, b, sigma) -> LinearModel:
    """Affine-drift, additive-noise model; the exact-moment test oracle."""
    return LinearModel(a, b, sigma)


class ScalarPolynomialModel(SdeModel):
    """Scalar SDE with polynomial drift and diffusion.

    ``drift_coeffs[i]`` multiplies ``x**i`` (likewise ``diffusion_coeffs``),
    so ``[0, -1]`` is ``u = -x`` and ``[0, 0, 0, -1]`` is ``u = -x**3``.
    All derivatives are exact.
    """

    name = "polynomial"

    def __init__(self, drift_coeffs, diffusion_coeffs):
        super().__init__(1, 1, MAX_ORDER)
        self.drift_coeffs = np.asarray(drift_coeffs, dtype=float)
        self.diffusion_coeffs = np.asarray(diffusion_coeffs, dtype=float)

    @staticmethod
    def _derivs(coeffs, x, order):
        out = np.zeros((x.shape[0], order + 1))
        c = coeffs
        for p in range(order + 1):
            out[:, p] = np.polynomial.polynomial.polyval(x, c) if c.size else 0.0
            c = np.polynomial.polynomial.polyder(c) if c.size > 1 else np.zeros(0)
        return out

    def numba_kernel(self):
        from . import _kernels

        if not _kernels.available():
            return None
        params = np.concatenate([[self.drift_coeffs.size], self.drift_coeffs, self.diffusion_coeffs])
        return _kernels.POLYNOMIAL, params

    def _drift_jet(self, X, t, order):
        return self._derivs(self.drift_coeffs, X[:, 0], order)[:, None, :]

    def _diffusion_jet(self, X, t, order):
        return self._derivs(self.diffusion_coeffs, X[:, 0], order)[:, None, None, :]


def polynomial_model(drift_coeffs, diffusion_coeffs) -> ScalarPolynomialModel:
    return ScalarPolynomialModel(drift_coeffs, diffusion_coeffs)


class KeplerModel(SdeModel):
    """Planar two-body motion with stochastic accelerations.

    State ``(x, y, vx, vy)`` in km and km/s; drift
    ``(vx, vy, -mu x / r^3, -mu y / r^3)``; constant diffusion
    ``diag(0, 0, sigma3, sigma4)`` driven by a 4-dimensional Wiener process.
    Drift derivatives are analytic up to second order.
    """

    name = "kepler"

    def __init__(self, mu: float = KEPLER_MU, sigma3: float = 1e-5, sigma4: float = 1e-5):
        if mu <= 0:
            raise ConfigError("mu must be positive")
        super().__init__(4, 4, 2)
        self.mu = float(mu)
        self.sigma3 = float(sigma3)
        self.sigma4 = float(sigma4)
        self._G = np.diag([0.0, 0.0, self.sigma3, self.sigma4])
        idx1 = index_map(4, 1)
        idx2 = index_map(4, 2)
        self._first = [[idx1[MultiIndex.unit(4, j)] for j in range(2)]]
        self._second = [
            [idx2[MultiIndex.unit(4, j) + MultiIndex.unit(4, l)] for l in range(2)]
            for j in range(2)
        ]

    def numba_kernel(self):
        from . import _kernels

        if not _kernels.available():
            return None
        return _kernels.KEPLER, np.array([self.mu, self.sigma3, self.sigma4])

    def state_scale(self, X):
        pos = np.maximum(np.hypot(X[:, 0], X[:, 1]), 1.0)
        vel = np.maximum(np.hypot(X[:, 2], X[:, 3]), 1e-3)
        return np.stack([pos, pos, vel, vel], axis=1)

    def _drift_jet(self, X, t, order):
        n = len(enumerate_up_to(4, order))
        B = X.shape[0]
        pos = X[:, :2]
        r2 = pos[:, 0] ** 2 + pos[:, 1] ** 2
        if np.any(r2 == 0.0) or not np.all(np.isfinite(r2)):
            raise NumericalError("Kepler drift evaluated at the gravitational singularity")
        r = np.sqrt(r2)
        mu = self.mu
        out = np.zeros((B, 4, n))
        inv3 = mu / (r2 * r)
        out[:, 0, 0] = X[:, 2]
        out[:, 1, 0] = X[:, 3]
        out[:, 2, 0] = -pos[:, 0] * inv3
        out[:, 3, 0] = -pos[:, 1] * inv3
        if order >= 1:
            out[:, 0, 3] = 1.0  # d vx / d vx
            out[:, 1, 4] = 1.0  # d vy / d vy
            inv5 = inv3 / r2
            for i in range(2):
                for j in range(2):
                    delta = 1.0 if i == j else 0.0
                    out[:, 2 + i, 1 + j] = -delta * inv3 + 3.0 * pos[:, i] * pos[:, j] * inv5
        if order >= 2:
            inv5 = inv3 / r2
            inv7 = inv5 / r2
            for i in range(2):
                for j in range(2):
                    for l in range(j, 2):
                        sym = (
                            (i == j) * pos[:, l] + (i == l) * pos[:, j] + (j == l) * pos[:, i]
                        )
                        val = 3.0 * sym * inv5 - 15.0 * pos[:, i] * pos[:, j] * pos[:, l] * inv7
                        out[:, 2 + i, self._second[j][l]] = val
        return out

    def _diffusion_jet(self, X, t, order):
        n = len(enumerate_up_to(4, order))
        out = np.zeros((X.shape[0], 4, 4, n))
        out[..., 0] = self._G
        return out


def kepler_model(mu: float = KEPLER_MU, sigma3: float = 1e-5, sigma4: float = 1e-5) -> KeplerModel:
    return KeplerModel(mu, sigma3, sigma4)


def kepler_circular_state(mu: float = KEPLER_MU, altitude: float = 200.0) -> np.ndarray:
    """Circular-orbit state at ``altitude`` km above the Earth surface."""
    radius = altitude + EARTH_RADIUS
    return np.array([radius, 0.0, 0.0, math.sqrt(mu / radius)])


class CallableModel(SdeModel):
    """Model assembled from user callables.

    ``drift(x, t)`` and ``diffusion(x, t)`` act on a single state. Optional
    ``drift_derivative(x, t, k, r)`` / ``diffusion_derivative(x, t, k, j, r)``
    supply analytic partials up to ``max_derivative_order``; without them
    every derivative is finite-differenced.
    """

    def __init__(
        self,
        drift: Callable,
        diffusion: Callable,
        state_dim: int,
        noise_dim: int,
        drift_derivative: Optional[Callable] = None,
        diffusion_derivative: Optional[Callable] = None,
        max_derivative_order: int = 0,
    ):
        if max_derivative_order > 0 and (drift_derivative is None or diffusion_derivative is None):
            raise ConfigError("analytic orders > 0 need both derivative callables")
        super().__init__(state_dim, noise_dim, max_derivative_order)
        self._drift = drift
        self._diffusion = diffusion
        self._drift_d = drift_derivative
        self._diffusion_d = diffusion_derivative

    def _drift_jet(self, X, t, order):
        indices = enumerate_up_to(self.state_dim, order)
        out = np.zeros((X.shape[0], self.state_dim, len(indices)))
        for b, x in enumerate(X):
            out[b, :, 0] = self._drift(x, t)
            for p, r in enumerate(indices[1:], start=1):
                for k in range(self.state_dim):
                    out[b, k, p] = self._drift_d(x, t, k, r)
        return out

    def _diffusion_jet(self, X, t, order):
        indices = enumerate_up_to(self.state_dim, order)
        out = np.zeros((X.shape[0], self.state_dim, self.noise_dim, len(indices)))
        for b, x in enumerate(X):
            out[b, :, :, 0] = np.asarray(self._diffusion(x, t)).reshape(
                self.state_dim, self.noise_dim
            )
            for p, r in enumerate(indices[1:], start=1):
                for k in range(self.state_dim):
                    for j in range(self.noise_dim):
                        out[b, k, j, p] = self._diffusion_d(x, t, k, j, r)
        return out


# -- noise ---------------------------------------------------------------------


def _gaussian_moment(p: int) -> float:
    """``E[Z^p]`` for a standard normal ``Z``: ``(p-1)!!`` for even ``p``."""
    if p % 2:
        return 0.0
    return float(special.factorial2(p - 1, exact=True)) if p else 1.0


def wiener_increment_moment(s: Sequence[int], h: float) -> float:
    """``E[dW^s]`` for independent components with variance ``h``."""
    if h <= 0:
        raise ValueError("step size must be positive")
    out = 1.0
    for p in s:
        if p % 2:
            return 0.0
        out *= _gaussian_moment(p) * h ** (p // 2)
    return out


def wiener_quantile_bound(P: float, h: float) -> float:
    """Smallest ``a`` with ``P(|dW| < a) > P`` for ``dW ~ N(0, h)``."""
    if not 0.0 < P < 1.0:
        raise ValueError("P must lie in (0, 1)")
    return math.sqrt(2.0 * h) * float(special.erfinv(P))


class NoiseModel:
    """Independent-increment driving noise with computable moments."""

    dim: int

    def increment_moment(self, s: Sequence[int], h: float) -> float:
        raise NotImplementedError

    def quantile_bound(self, j: int, P: float, h: float) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, h: float, size: int) -> np.ndarray:
        """Draw ``size`` increments, shape ``(size, dim)``."""
        raise NotImplementedError


@dataclass(frozen=True)
class WienerNoise(NoiseModel):
    """Standard ``d``-dimensional Wiener process."""

    dim: int = 1

    def increment_moment(self, s, h):
        if len(s) != self.dim:
            raise ValueError(f"noise multi-index must have length {self.dim}")
        return wiener_increment_moment(s, h)

    def quantile_bound(self, j, P, h):
        return wiener_quantile_bound(P, h)

    def sample(self, rng, h, size):
        return math.sqrt(h) * rng.standard_normal((size, self.dim))


@dataclass(frozen=True)
class TruncatedGaussianNoise(NoiseModel):
    """Increments ``sqrt(h) Z`` with ``Z`` standard normal conditioned on ``|Z| < cutoff``.

    The support is bounded, which is the setting in which the truncated
    expansions are guaranteed to converge as the order grows.
    """

    dim: int = 1
    cutoff: float = 3.0
    _moments: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        c = self.cutoff
        mass = 2.0 * stats.norm.cdf(c) - 1.0
        tail = 2.0 * stats.norm.pdf(c)
        # I_p = int_{-c}^{c} z^p phi(z) dz = (p-1) I_{p-2} - c^{p-1} 2 phi(c), p even
        moments = [1.0, 0.0]
        integral = mass
        for p in range(2, 2 * MAX_ORDER + 1):
            if p % 2:
                moments.append(0.0)
            else:
                integral = (p - 1) * integral - c ** (p - 1) * tail
                moments.append(integral / mass)
        object.__setattr__(self, "_moments", tuple(moments))

    def unit_moment(self, p: int) -> float:
        return self._moments[p]

    def increment_moment(self, s, h):
        if len(s) != self.dim:
            raise ValueError(f"noise multi-index must have length {self.dim}")
        out = 1.0
        for p in s:
            out *= self._moments[p] * h ** (p / 2.0)
        return out

    def quantile_bound(self, j, P, h):
        if not 0.0 < P < 1.0:
            raise ValueError("P must lie in (0, 1)")
        mass = 2.0 * stats.norm.cdf(self.cutoff) - 1.0
        # P(|Z| < a | |Z| < c) = (2 Phi(a) - 1) / mass
        a = stats.norm.ppf(0.5 * (1.0 + P * mass))
        return math.sqrt(h) * min(float(a), self.cutoff)

    def sample(self, rng, h, size):
        out = rng.standard_normal((size, self.dim))
        bad = np.abs(out) >= self.cutoff
        while bad.any():
            out[bad] = rng.standard_normal(int(bad.sum()))
            bad = np.abs(out) >= self.cutoff
        return math.sqrt(h) * out


# -- initial conditions ----------------------------------------------------------


@dataclass(frozen=True)
class InitialCondition:
    """Fixed or Gaussian initial state.

    For ``kind == "gaussian"`` the covariance must be symmetric positive
    semi-definite; the PCE basis additionally needs it positive definite.
    """

    kind: str
    fixed_value: Optional[np.ndarray] = None
    mean: Optional[np.ndarray] = None
    covariance: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "fixed":
            if self.fixed_value is None:
                raise ConfigError("fixed initial condition needs a value")
            object.__setattr__(self, "fixed_value", np.asarray(self.fixed_value, dtype=float))
        elif self.kind == "gaussian":
            if self.mean is None or self.covariance is None:
                raise ConfigError("gaussian initial condition needs mean and covariance")
            mean = np.asarray(self.mean, dtype=float)
            cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
            if cov.shape != (mean.size, mean.size):
                raise ConfigError(f"covariance shape {cov.shape} does not match mean")
            if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
                raise ConfigError("covariance is not symmetric")
            if np.linalg.eigvalsh(cov).min() < -1e-12 * max(1.0, np.abs(cov).max()):
                raise ConfigError("covariance has negative eigenvalues")
            object.__setattr__(self, "mean", mean)
            object.__setattr__(self, "covariance", cov)
        else:
            raise ConfigError(f"unknown initial-condition kind {self.kind!r}")

    @classmethod
    def fixed(cls, x0) -> "InitialCondition":
        return cls("fixed", fixed_value=x0)

    @classmethod
    def gaussian(cls, mean, covariance) -> "InitialCondition":
        return cls("gaussian", mean=mean, covariance=covariance)

    @property
    def dim(self) -> int:
        value = self.fixed_value if self.kind == "fixed" else self.mean
        return int(value.size)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``n`` initial states, shape ``(n, v)``."""
        if self.kind == "fixed":
            return np.tile(self.fixed_value, (n, 1))
        root = symmetric_sqrt(self.covariance)
        return self.mean + rng.standard_normal((n, self.dim)) @ root.T


def symmetric_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via the eigendecomposition."""
    w, V = np.linalg.eigh(cov)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
