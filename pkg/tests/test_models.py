import math

import mpmath
import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from sdemoments.errors import ConfigError, NumericalError
from sdemoments.models import (
    CallableModel,
    InitialCondition,
    TruncatedGaussianNoise,
    WienerNoise,
    kepler_circular_state,
    kepler_model,
    linear_model,
    polynomial_model,
    symmetric_sqrt,
    wiener_increment_moment,
    wiener_quantile_bound,
)
from sdemoments.multiindex import enumerate_up_to


class TestKepler:
    model = kepler_model()
    x = np.array([6578.137, 150.0, -0.2, 7.78])

    def test_drift_and_diffusion(self):
        u = self.model.drift(self.x, 0.0)
        r = math.hypot(*self.x[:2])
        assert_allclose(u[:2], self.x[2:])
        assert_allclose(u[2:], -self.model.mu * self.x[:2] / r**3, rtol=1e-14)
        assert_allclose(self.model.diffusion(self.x, 0.0), np.diag([0, 0, 1e-5, 1e-5]))

    @pytest.mark.parametrize("r", [r for r in enumerate_up_to(4, 2) if 0 < r.order and not any(r[2:])])
    @pytest.mark.parametrize("i", [0, 1])
    def test_acceleration_derivatives_match_high_precision(self, i, r):
        mpmath.mp.dps = 40
        mu = mpmath.mpf(self.model.mu)

        def a(px, py):
            return -mu * (px, py)[i] / mpmath.power(px * px + py * py, 1.5)

        expected = mpmath.diff(a, (mpmath.mpf(self.x[0]), mpmath.mpf(self.x[1])), tuple(r[:2]))
        got = self.model.drift_derivative(self.x, 0.0, 2 + i, r)
        assert_allclose(got, float(expected), rtol=1e-10)

    def test_velocity_rows_are_linear(self):
        assert self.model.drift_derivative(self.x, 0.0, 0, (0, 0, 1, 0)) == 1.0
        assert self.model.drift_derivative(self.x, 0.0, 1, (0, 0, 0, 1)) == 1.0
        assert self.model.drift_derivative(self.x, 0.0, 0, (1, 0, 0, 0)) == 0.0
        assert self.model.drift_derivative(self.x, 0.0, 2, (0, 0, 1, 0)) == 0.0

    def test_jet_is_batched(self):
        X = np.stack([self.x, self.x * 1.01])
        jet = self.model.drift_jet(X, 0.0, 2)
        assert jet.shape == (2, 4, 15)
        assert_allclose(jet[1, :, 0], self.model.drift(X[1], 0.0))

    def test_finite_difference_fallback_for_third_order(self):
        # beyond the analytic order the jet falls back to finite differences
        mpmath.mp.dps = 40
        mu = mpmath.mpf(self.model.mu)

        def ax(px, py):
            return -mu * px / mpmath.power(px * px + py * py, 1.5)

        expected = float(mpmath.diff(ax, (mpmath.mpf(self.x[0]), mpmath.mpf(self.x[1])), (3, 0)))
        got = self.model.drift_derivative(self.x, 0.0, 2, (3, 0, 0, 0))
        assert_allclose(got, expected, rtol=1e-4)

    def test_singularity_raises(self):
        with pytest.raises(NumericalError):
            self.model.drift(np.array([0.0, 0.0, 1.0, 1.0]), 0.0)

    def test_invalid_mu(self):
        with pytest.raises(ConfigError):
            kepler_model(mu=-1.0)

    def test_circular_state(self):
        x0 = kepler_circular_state()
        assert_allclose(x0[0], 6578.137)
        assert_allclose(x0[3] ** 2 * x0[0], 3.986e5)
        assert x0[1] == x0[2] == 0.0


class TestPolynomialAndLinear:
    def test_cubic_derivatives(self):
        m = polynomial_model([0, 0, 0, -1], [1])
        x = np.array([1.5])
        expected = [-1.5**3, -3 * 1.5**2, -6 * 1.5, -6.0, 0.0]
        got = [m.drift_derivative(x, 0.0, 0, (p,)) for p in range(5)]
        assert_allclose(got, expected)
        assert m.diffusion_derivative(x, 0.0, 0, 0, (1,)) == 0.0

    def test_multiplicative_diffusion(self):
        m = polynomial_model([0, -0.5], [0, 0.2])
        assert_allclose(m.diffusion(np.array([3.0]), 0.0), [[0.6]])
        assert_allclose(m.diffusion_derivative(np.array([3.0]), 0.0, 0, 0, (1,)), 0.2)

    def test_linear_model_shapes(self):
        m = linear_model([[-1.0, 0.5], [0.0, -2.0]], [0.1, 0.0], [[1.0], [0.5]])
        assert (m.state_dim, m.noise_dim) == (2, 1)
        assert_allclose(m.drift(np.array([1.0, 2.0]), 0.0), [0.1, -4.0])
        assert_allclose(m.drift_derivative(np.zeros(2), 0.0, 0, (0, 1)), 0.5)
        assert m.drift_derivative(np.zeros(2), 0.0, 0, (1, 1)) == 0.0

    def test_linear_model_rejects_bad_shapes(self):
        with pytest.raises(ConfigError):
            linear_model([[1.0, 0.0]], [0.0], [1.0])


class TestCallableModel:
    def test_finite_differences_of_smooth_drift(self):
        m = CallableModel(
            lambda x, t: np.array([np.sin(x[0]) * x[1], np.exp(0.3 * x[0])]),
            lambda x, t: np.eye(2),
            2,
            2,
        )
        x = np.array([0.4, 1.3])
        assert_allclose(m.drift_derivative(x, 0.0, 0, (1, 0)), np.cos(0.4) * 1.3, rtol=1e-6)
        assert_allclose(m.drift_derivative(x, 0.0, 0, (1, 1)), np.cos(0.4), rtol=1e-5)
        assert_allclose(m.drift_derivative(x, 0.0, 1, (2, 0)), 0.09 * np.exp(0.12), rtol=1e-4)

    def test_derivative_callables_required(self):
        with pytest.raises(ConfigError):
            CallableModel(lambda x, t: x, lambda x, t: np.eye(1), 1, 1, max_derivative_order=1)


class TestNoise:
    @pytest.mark.parametrize(
        "s, expected", [((0,), 1.0), ((1,), 0.0), ((2,), 0.1), ((4,), 3 * 0.01), ((6,), 15 * 1e-3)]
    )
    def test_wiener_moments(self, s, expected):
        assert_allclose(wiener_increment_moment(s, 0.1), expected, rtol=1e-14)

    def test_wiener_moment_factorizes(self):
        assert_allclose(wiener_increment_moment((2, 4), 0.5), 0.5 * 3 * 0.25)
        assert wiener_increment_moment((2, 1), 0.5) == 0.0

    def test_wiener_quantile(self):
        a = wiener_quantile_bound(0.95, 0.01)
        assert_allclose(stats.norm.cdf(a / 0.1) - stats.norm.cdf(-a / 0.1), 0.95, rtol=1e-12)
        with pytest.raises(ValueError):
            wiener_quantile_bound(1.0, 0.01)

    @pytest.mark.parametrize("p", [2, 4, 6, 8])
    def test_truncated_moments_match_scipy(self, p):
        noise = TruncatedGaussianNoise(1, 2.5)
        expected = stats.truncnorm(-2.5, 2.5).moment(p) * 0.04 ** (p / 2)
        assert_allclose(noise.increment_moment((p,), 0.04), expected, rtol=1e-10)
        assert noise.increment_moment((p - 1,), 0.04) == 0.0

    def test_truncated_samples_bounded(self):
        noise = TruncatedGaussianNoise(2, 1.0)
        draws = noise.sample(np.random.default_rng(1), 0.25, 5000)
        assert draws.shape == (5000, 2)
        assert np.abs(draws).max() < 0.5
        assert_allclose(draws.var(axis=0), noise.increment_moment((2, 0), 0.25), rtol=0.05)

    def test_truncated_quantile(self):
        noise = TruncatedGaussianNoise(1, 3.0)
        a = noise.quantile_bound(0, 0.9, 1.0)
        dist = stats.truncnorm(-3, 3)
        assert_allclose(dist.cdf(a) - dist.cdf(-a), 0.9, rtol=1e-10)

    def test_wiener_sample_shape(self):
        assert WienerNoise(3).sample(np.random.default_rng(0), 0.1, 7).shape == (7, 3)


class TestInitialCondition:
    def test_fixed(self):
        ic = InitialCondition.fixed([1.0, 2.0])
        assert ic.dim == 2
        assert_allclose(ic.sample(np.random.default_rng(0), 3), [[1, 2]] * 3)

    def test_gaussian_sampling(self):
        cov = np.array([[2.0, 0.3], [0.3, 0.5]])
        ic = InitialCondition.gaussian([1.0, -1.0], cov)
        draws = ic.sample(np.random.default_rng(3), 200_000)
        assert_allclose(draws.mean(axis=0), [1, -1], atol=0.01)
        assert_allclose(np.cov(draws.T), cov, atol=0.02)

    @pytest.mark.parametrize(
        "cov", [[[1.0, 0.5], [0.4, 1.0]], [[1.0, 2.0], [2.0, 1.0]], [[1.0]]]
    )
    def test_invalid_covariances(self, cov):
        with pytest.raises(ConfigError):
            InitialCondition.gaussian([0.0, 0.0], cov)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            InitialCondition("uniform")

    def test_symmetric_sqrt(self):
        cov = np.array([[4.0, 1.0], [1.0, 3.0]])
        root = symmetric_sqrt(cov)
        assert_allclose(root, root.T)
        assert_allclose(root @ root, cov, rtol=1e-12)
