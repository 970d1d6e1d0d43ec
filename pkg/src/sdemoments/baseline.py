"""Euler-Maruyama Monte Carlo reference: sampler, empirical moments and KDE."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, NumericalError
from .models import InitialCondition, NoiseModel, SdeModel, WienerNoise
from .multiindex import MultiIndex
from .propagation import LOG_EVERY, step_count

logger = logging.getLogger(__name__)

# increments buffered per block, summed over paths
_BLOCK_BUDGET = 2_000_000


@dataclass
class SampleEnsemble:
    """Final states of independent Euler-Maruyama paths."""

    final_states: np.ndarray
    seed: Optional[int]
    n_steps: int
    h: float

    @property
    def size(self) -> int:
        return self.final_states.shape[0]


def _em_update(X, t, h, model: SdeModel, dW):
    U = model.drift_jet(X, t, 0)[..., 0]
    G = model.diffusion_jet(X, t, 0)[..., 0]
    return X + h * U + np.einsum("bkj,bj->bk", G, dW)


def euler_maruyama_path(
    x0, model: SdeModel, h: float, t0: float, tn: float, rng: np.random.Generator,
    noise: Optional[NoiseModel] = None,
) -> np.ndarray:
    """Final state of one Euler-Maruyama path started at ``x0``."""
    if h <= 0:
        raise ConfigError("step size must be positive")
    noise = noise or WienerNoise(model.noise_dim)
    n_steps = step_count(t0, tn, h)
    X = np.asarray(x0, dtype=float)[None, :].copy()
    for n in range(1, n_steps + 1):
        dW = noise.sample(rng, h, 1)
        try:
            X = _em_update(X, t0 + (n - 1) * h, h, model, dW)
        except NumericalError as exc:
            raise NumericalError(str(exc), step=n) from exc
        if not np.all(np.isfinite(X)):
            raise NumericalError("non-finite Euler-Maruyama state", step=n)
    return X[0]


def path_generators(seed: int, n_paths: int) -> list[np.random.Generator]:
    """Independent per-path generators spawned from one seed."""
    children = np.random.SeedSequence(seed).spawn(n_paths)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def sample_ensemble(
    init: InitialCondition,
    model: SdeModel,
    h: float,
    t0: float,
    tn: float,
    n_paths: int,
    seed: int,
    noise: Optional[NoiseModel] = None,
    n_steps: Optional[int] = None,
) -> SampleEnsemble:
    """Simulate ``n_paths`` Euler-Maruyama paths to ``tn``.

    Path ``i`` draws its initial state (for a Gaussian start) and then all
    of its increments from its own generator, so results do not depend on
    how paths are batched. Paths are advanced together, one block of
    pre-drawn increments at a time.
    """
    if n_paths < 1:
        raise ConfigError("need at least one path")
    noise = noise or WienerNoise(model.noise_dim)
    if noise.dim != model.noise_dim:
        raise ConfigError("noise dimension does not match the model")
    if n_steps is None:
        n_steps = step_count(t0, tn, h)
    gens = path_generators(seed, n_paths)
    v, d = model.state_dim, model.noise_dim
    X = np.empty((n_paths, v))
    for i, g in enumerate(gens):
        X[i] = init.sample(g, 1)[0]
    block = max(1, min(n_steps, _BLOCK_BUDGET // (n_paths * d)))
    n = 0
    while n < n_steps:
        k = min(block, n_steps - n)
        dW = np.stack([noise.sample(g, h, k) for g in gens], axis=1)  # (k, paths, d)
        for step in range(k):
            n += 1
            try:
                X = _em_update(X, t0 + (n - 1) * h, h, model, dW[step])
            except NumericalError as exc:
                raise NumericalError(str(exc), step=n) from exc
            if n % LOG_EVERY == 0:
                logger.info("baseline step %d/%d", n, n_steps)
        if not np.all(np.isfinite(X)):
            bad = np.flatnonzero(~np.isfinite(X).all(axis=1))
            raise NumericalError("non-finite Euler-Maruyama state", step=n, sample=int(bad[0]))
    return SampleEnsemble(X, seed, n_steps, h)


def _jackknife_mean(values: np.ndarray) -> tuple[float, float]:
    n = values.shape[0]
    mean = float(values.mean())
    if n < 2:
        return mean, math.nan
    loo = (n * mean - values) / (n - 1)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return mean, se


def empirical_moment(ensemble: SampleEnsemble, r: Sequence[int]) -> tuple[float, float]:
    """Sample mean of ``X^r`` and its jackknife standard error."""
    r = MultiIndex(r)
    if r.order < 1:
        raise ValueError("moment order must be >= 1")
    if r.dim != ensemble.final_states.shape[1]:
        raise ValueError("multi-index length does not match the state dimension")
    values = np.prod(ensemble.final_states ** np.array(r, dtype=float), axis=1)
    return _jackknife_mean(values)


def empirical_mean_covariance(ensemble: SampleEnsemble) -> tuple[np.ndarray, np.ndarray]:
    X = ensemble.final_states
    return X.mean(axis=0), np.cov(X, rowvar=False, ddof=1).reshape(X.shape[1], X.shape[1])


def silverman_bandwidth(samples) -> float:
    """``1.06 min(std, IQR / 1.34) n^(-1/5)``."""
    x = np.asarray(samples, dtype=float)
    std = float(np.std(x, ddof=1))
    iqr = float(stats.iqr(x))
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    return 1.06 * spread * x.size ** (-0.2)


def kde_1d(samples, x):
    """Gaussian-kernel density estimate with Silverman's bandwidth."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < 2 or np.ptp(samples) == 0.0:
        raise ValueError("KDE needs at least two distinct samples")
    bw = silverman_bandwidth(samples)
    kde = stats.gaussian_kde(samples, bw_method=bw / float(np.std(samples, ddof=1)))
    value = kde(np.atleast_1d(np.asarray(x, dtype=float)))
    return float(value[0]) if np.ndim(x) == 0 else value
