"""Independent reference computations shared by the test modules.

None of these routines import the package; they are direct transcriptions
of the Euler-Maruyama scheme and of textbook identities.
"""

import math

import numpy as np
from numpy.polynomial import hermite_e


def gauss_expectation(f, degree: int = 40):
    """``E[f(Z)]`` for ``Z ~ N(0, 1)`` by Gauss-Hermite quadrature."""
    nodes, weights = hermite_e.hermegauss(degree)
    return float(np.sum(weights * f(nodes)) / math.sqrt(2.0 * math.pi))


def gaussian_moment(j: int) -> float:
    """``E[Z^j]`` for standard normal ``Z``: ``(j-1)!!`` for even ``j``."""
    return 0.0 if j % 2 else float(math.prod(range(j - 1, 0, -2)))


def em_linear_moments(a, b, sigma, x0, h, n, p_max):
    """Raw moments of scalar EM for ``dX = (a X + b) dt + sigma dW``.

    ``X' = c X + b h + sigma dW`` with ``c = 1 + a h``; moments propagate
    through the binomial expansion of ``(c X + b h + sigma dW)^p``.
    """
    c = 1.0 + a * h
    # E[(b h + sigma sqrt(h) Z)^q], odd Gaussian moments exactly zero
    shift_moments = [
        sum(
            math.comb(q, j) * (b * h) ** (q - j) * (sigma * math.sqrt(h)) ** j * gaussian_moment(j)
            for j in range(q + 1)
        )
        for q in range(p_max + 1)
    ]
    m = [x0**p for p in range(p_max + 1)]
    for _ in range(n):
        m = [
            sum(math.comb(p, q) * c**q * m[q] * shift_moments[p - q] for q in range(p + 1))
            for p in range(p_max + 1)
        ]
    return np.array(m)


def em_multiplicative_moment(a, sigma, x0, h, n, p):
    """``E[X_n^p]`` for EM of ``dX = a X dt + sigma X dW``: a product of iid factors."""
    factor = gauss_expectation(lambda z: (1.0 + a * h + sigma * math.sqrt(h) * z) ** p)
    return x0**p * factor**n


def em_scalar_ensemble(drift, g, x0, h, n, n_paths, rng, increments):
    """Vectorized EM ensemble of a scalar additive-noise SDE."""
    x = np.full(n_paths, float(x0))
    for _ in range(n):
        x = x + h * drift(x) + g * increments(rng, n_paths)
    return x


def wiener_draw(h):
    return lambda rng, size: math.sqrt(h) * rng.standard_normal(size)


def truncated_draw(h, cutoff):
    def draw(rng, size):
        z = rng.standard_normal(size)
        bad = np.abs(z) >= cutoff
        while bad.any():
            z[bad] = rng.standard_normal(int(bad.sum()))
            bad = np.abs(z) >= cutoff
        return math.sqrt(h) * z

    return draw


def moment_with_se(samples, p):
    values = samples**p
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))
