import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from oracles import em_linear_moments
from sdemoments import baseline
from sdemoments.baseline import (
    SampleEnsemble,
    empirical_mean_covariance,
    empirical_moment,
    euler_maruyama_path,
    kde_1d,
    path_generators,
    sample_ensemble,
    silverman_bandwidth,
)
from sdemoments.errors import ConfigError, NumericalError
from sdemoments.models import InitialCondition, TruncatedGaussianNoise, kepler_model, polynomial_model

OU = polynomial_model([0.0, -1.0], [0.5])


class TestSampler:
    def test_paths_independent_of_ensemble_size(self):
        init = InitialCondition.gaussian([1.0], [[0.1]])
        small = sample_ensemble(init, OU, 0.1, 0, 1, 5, seed=9)
        large = sample_ensemble(init, OU, 0.1, 0, 1, 12, seed=9)
        assert_allclose(large.final_states[:5], small.final_states, rtol=0)

    def test_block_size_does_not_matter(self, monkeypatch):
        init = InitialCondition.fixed([1.0])
        ref = sample_ensemble(init, OU, 0.01, 0, 1, 7, seed=2)
        monkeypatch.setattr(baseline, "_BLOCK_BUDGET", 20)
        chunked = sample_ensemble(init, OU, 0.01, 0, 1, 7, seed=2)
        assert_allclose(chunked.final_states, ref.final_states, rtol=0)

    def test_single_path_matches_ensemble(self):
        init = InitialCondition.fixed([1.0])
        ens = sample_ensemble(init, OU, 0.05, 0, 1, 3, seed=4)
        gens = path_generators(4, 3)
        single = euler_maruyama_path([1.0], OU, 0.05, 0, 1, gens[2])
        assert_allclose(single, ens.final_states[2], rtol=1e-15)

    def test_replay_of_one_step(self):
        rng = path_generators(1, 1)[0]
        dw = math.sqrt(0.1) * rng.standard_normal(1)[0]
        got = euler_maruyama_path([2.0], OU, 0.1, 0, 0.1, path_generators(1, 1)[0])
        assert_allclose(got, [2.0 - 0.1 * 2.0 + 0.5 * dw])

    def test_ou_moments_within_standard_errors(self):
        ens = sample_ensemble(InitialCondition.fixed([2.0]), OU, 0.1, 0, 2, 20_000, seed=5)
        expected = em_linear_moments(-1.0, 0.0, 0.5, 2.0, 0.1, 20, 4)
        for p in (1, 2, 3, 4):
            value, se = empirical_moment(ens, (p,))
            assert abs(value - expected[p]) < 4 * se

    def test_truncated_noise_bounded(self):
        noise = TruncatedGaussianNoise(1, 0.5)
        ens = sample_ensemble(InitialCondition.fixed([0.0]), polynomial_model([0.0], [1.0]), 1.0, 0, 1, 500, 0, noise)
        assert np.abs(ens.final_states).max() < 0.5

    def test_explicit_step_count(self):
        ens = sample_ensemble(InitialCondition.fixed([1.0]), OU, 0.1, 0, 100, 4, 0, n_steps=3)
        assert ens.n_steps == 3

    def test_invalid_arguments(self):
        with pytest.raises(ConfigError):
            sample_ensemble(InitialCondition.fixed([1.0]), OU, 0.1, 0, 1, 0, 0)
        with pytest.raises(ConfigError):
            euler_maruyama_path([1.0], OU, -0.1, 0, 1, np.random.default_rng())

    def test_blow_up_reports_step(self):
        model = polynomial_model([0, 0, 0, 1.0], [0.0])
        with pytest.raises(NumericalError) as info:
            sample_ensemble(InitialCondition.fixed([10.0]), model, 1.0, 0, 20, 2, 0)
        assert info.value.step is not None

    def test_kepler_singularity(self):
        with pytest.raises(NumericalError):
            sample_ensemble(InitialCondition.fixed([0.0, 0.0, 1.0, 0.0]), kepler_model(), 0.1, 0, 1, 2, 0)


class TestStatistics:
    def test_jackknife_of_mean_is_classical_se(self):
        x = np.random.default_rng(0).normal(size=(500, 1))
        ens = SampleEnsemble(x, None, 1, 0.1)
        value, se = empirical_moment(ens, (1,))
        assert_allclose(value, x.mean())
        assert_allclose(se, x.std(ddof=1) / math.sqrt(500), rtol=1e-10)

    def test_mixed_moment(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        value, _ = empirical_moment(SampleEnsemble(x, None, 1, 0.1), (1, 1))
        assert value == 7.0
        with pytest.raises(ValueError):
            empirical_moment(SampleEnsemble(x, None, 1, 0.1), (1,))

    def test_mean_covariance(self):
        x = np.random.default_rng(1).normal(size=(100, 3))
        mean, cov = empirical_mean_covariance(SampleEnsemble(x, None, 1, 0.1))
        assert_allclose(cov, np.cov(x.T))
        assert_allclose(mean, x.mean(axis=0))


class TestKde:
    def test_bandwidth_formula(self):
        x = np.random.default_rng(2).normal(size=1000)
        spread = min(x.std(ddof=1), stats.iqr(x) / 1.34)
        assert_allclose(silverman_bandwidth(x), 1.06 * spread * 1000 ** (-0.2))

    def test_kde_explicit_sum(self):
        x = np.array([0.0, 1.0, 3.0, 3.5])
        grid = np.linspace(-2, 5, 7)
        bw = silverman_bandwidth(x)
        expected = stats.norm.pdf((grid[:, None] - x) / bw).sum(axis=1) / (x.size * bw)
        assert_allclose(kde_1d(x, grid), expected, rtol=1e-10)

    def test_kde_normalized_and_accurate(self):
        x = np.random.default_rng(3).normal(1.0, 2.0, size=50_000)
        grid = np.linspace(-12, 14, 2001)
        f = kde_1d(x, grid)
        assert_allclose(np.trapezoid(f, grid), 1.0, atol=1e-6)
        assert 0.5 * np.trapezoid(np.abs(f - stats.norm.pdf(grid, 1, 2)), grid) < 0.02

    def test_degenerate(self):
        with pytest.raises(ValueError):
            kde_1d([1.0, 1.0, 1.0], [0.0])
