"""Tests for the elementary kernels: truncated normals, deterministic
variance-reduction maps, leapfrog, and the No-U-Turn transition."""

import numpy as np
import pytest
from scipy.special import ndtr
from scipy.stats import kstest, norm

from mvprobit.samplers import (
    HmcConfig,
    antithetic_step,
    conditional_normal_params,
    exact_gauss_hmc,
    find_reasonable_step_size,
    leapfrog,
    nuts_sample,
    over_relax_step,
    sample_truncated_normal,
    truncated_normal_array,
)

# Mills-ratio means of the standard normal truncated to (lo, inf).
HALF_NORMAL_MEAN = 0.7978845608028654  # lo = 0
TAIL6_MEAN = 6.1585807208548236  # lo = 6


class TestTruncatedNormal:
    def test_half_normal_mean(self):
        rng = np.random.default_rng(11)
        draws = truncated_normal_array(np.zeros(1_000_000), 1.0, 0.0, np.inf, rng)
        assert np.all(draws > 0.0)
        assert draws.mean() == pytest.approx(HALF_NORMAL_MEAN, abs=3e-3)

    def test_deep_tail_mean(self):
        rng = np.random.default_rng(12)
        draws = truncated_normal_array(np.zeros(200_000), 1.0, 6.0, np.inf, rng)
        assert np.all(draws > 6.0)
        assert draws.mean() == pytest.approx(TAIL6_MEAN, rel=0.01)

    def test_extreme_bounds_stay_finite(self):
        rng = np.random.default_rng(13)
        right = truncated_normal_array(np.zeros(20_000), 1.0, 8.0, np.inf, rng)
        assert np.all(np.isfinite(right)) and np.all(right > 8.0)
        # Mills ratio at 8: mean 8.121812...
        assert right.mean() == pytest.approx(8.121812569433447, rel=0.01)
        left = truncated_normal_array(np.zeros(20_000), 1.0, -np.inf, -8.0, rng)
        assert np.all(np.isfinite(left)) and np.all(left < -8.0)
        assert left.mean() == pytest.approx(-8.121812569433447, rel=0.01)

    def test_distribution_matches_cdf(self):
        rng = np.random.default_rng(14)
        cases = [(-1.0, 2.0), (0.5, 0.9), (6.0, 6.5), (-np.inf, 0.0), (3.9, 4.2)]
        for lo, hi in cases:
            draws = truncated_normal_array(np.zeros(40_000), 1.0, lo, hi, rng)
            p_lo = ndtr(lo) if np.isfinite(lo) else 0.0
            p_hi = ndtr(hi) if np.isfinite(hi) else 1.0
            result = kstest(draws, lambda x: (ndtr(x) - p_lo) / (p_hi - p_lo))
            assert result.pvalue > 0.001, (lo, hi, result)

    def test_location_scale(self):
        rng = np.random.default_rng(15)
        draws = truncated_normal_array(
            np.full(200_000, 3.0), 2.0, 3.0, np.inf, rng
        )
        assert draws.mean() == pytest.approx(3.0 + 2.0 * HALF_NORMAL_MEAN, abs=0.01)

    def test_scalar_wrapper_and_errors(self):
        rng = np.random.default_rng(16)
        x = sample_truncated_normal(1.0, 0.5, 0.0, 2.0, rng)
        assert 0.0 < x < 2.0
        with pytest.raises(ValueError):
            sample_truncated_normal(0.0, -1.0, 0.0, 1.0, rng)
        with pytest.raises(ValueError):
            sample_truncated_normal(0.0, 1.0, 2.0, 2.0, rng)


class TestConditionalNormal:
    def test_matches_direct_solve(self):
        rng = np.random.default_rng(17)
        for _ in range(25):
            d = int(rng.integers(2, 7))
            raw = rng.standard_normal((d + 2, d))
            cov = raw.T @ raw + 0.5 * np.eye(d)
            mu = rng.standard_normal(d)
            x = rng.standard_normal(d)
            idx = int(rng.integers(d))
            keep = np.arange(d) != idx
            mean, sd = conditional_normal_params(mu, cov, idx, x[keep])
            prec = np.linalg.inv(cov)
            sd_ref = 1.0 / np.sqrt(prec[idx, idx])
            mean_ref = mu[idx] - (prec[idx, keep] @ (x[keep] - mu[keep])) / prec[idx, idx]
            assert mean == pytest.approx(mean_ref, rel=1e-10, abs=1e-10)
            assert sd == pytest.approx(sd_ref, rel=1e-10)

    def test_univariate_degenerates(self):
        mean, sd = conditional_normal_params(
            np.array([2.0]), np.array([[4.0]]), 0, np.zeros(0)
        )
        assert (mean, sd) == (2.0, 2.0)


class TestDeterministicMaps:
    def test_antithetic_involution_exact(self):
        # Dyadic inputs make the double reflection bit-exact; general floats
        # recover the start to machine precision.
        theta = np.array([0.25, -1.5, 3.0, 0.0, -0.125])
        mu = np.array([0.5, 2.0, -0.75, 1.0, 0.0])
        assert np.array_equal(antithetic_step(antithetic_step(theta, mu), mu), theta)
        assert np.array_equal(antithetic_step(mu, mu), mu)
        rng = np.random.default_rng(18)
        t2, m2 = rng.standard_normal(5), rng.standard_normal(5)
        np.testing.assert_allclose(
            antithetic_step(antithetic_step(t2, m2), m2), t2, rtol=0, atol=1e-14
        )

    def test_over_relax_kappa_one_is_antithetic(self):
        rng = np.random.default_rng(19)
        for _ in range(10):
            theta, mu = rng.standard_normal(2)
            got = over_relax_step(theta, mu, 1.3, 1.0, rng)
            assert got == 2.0 * mu - theta

    def test_over_relax_preserves_gaussian(self):
        rng = np.random.default_rng(20)
        theta = rng.normal(1.0, 2.0, size=100_000)
        moved = np.array([over_relax_step(t, 1.0, 2.0, 0.7, rng) for t in theta])
        assert moved.mean() == pytest.approx(1.0, abs=0.02)
        assert moved.std() == pytest.approx(2.0, abs=0.02)
        # Negative serial dependence with the input.
        assert np.corrcoef(theta, moved)[0, 1] == pytest.approx(-0.7, abs=0.01)

    def test_over_relax_rejects_bad_inputs(self):
        rng = np.random.default_rng(21)
        with pytest.raises(ValueError):
            over_relax_step(0.0, 0.0, 1.0, -1.0, rng)
        with pytest.raises(ValueError):
            over_relax_step(0.0, 0.0, 0.0, 0.5, rng)

    def test_exact_flow_reflection_and_identity(self):
        rng = np.random.default_rng(22)
        cov = np.array([[2.0, 0.6], [0.6, 1.0]])
        mu = np.array([0.5, -1.0])
        theta = rng.standard_normal(2)
        u = rng.standard_normal(2)
        np.testing.assert_allclose(
            exact_gauss_hmc(theta, u, np.pi, mu, cov), 2.0 * mu - theta, atol=1e-12
        )
        np.testing.assert_allclose(
            exact_gauss_hmc(theta, u, 0.0, mu, cov), theta, atol=0
        )

    def test_exact_flow_quarter_period_moments(self):
        # t = pi/2 with equilibrium momentum is an independent N(mu, cov) draw.
        rng = np.random.default_rng(23)
        cov = np.array([[2.0, 0.6, -0.3], [0.6, 1.0, 0.2], [-0.3, 0.2, 0.5]])
        mu = np.array([1.0, -0.5, 0.25])
        n = 100_000
        u0 = rng.multivariate_normal(np.zeros(3), np.linalg.inv(cov), size=n)
        theta0 = np.tile(np.array([5.0, 5.0, 5.0]), (n, 1))
        moved = mu + (theta0 - mu) * np.cos(np.pi / 2) + u0 @ cov.T * np.sin(np.pi / 2)
        se_mean = np.sqrt(np.diag(cov) / n)
        np.testing.assert_array_less(np.abs(moved.mean(axis=0) - mu), 3.0 * se_mean)
        sample_cov = np.cov(moved.T)
        for i in range(3):
            for j in range(3):
                se = np.sqrt((cov[i, i] * cov[j, j] + cov[i, j] ** 2) / n)
                assert abs(sample_cov[i, j] - cov[i, j]) < 3.0 * se, (i, j)


class TestLeapfrog:
    @staticmethod
    def _gauss_grad(prec):
        return lambda theta: -prec @ theta

    def test_reversibility(self):
        rng = np.random.default_rng(24)
        prec = np.array([[1.0, 0.3], [0.3, 2.0]])
        theta0 = rng.standard_normal(2)
        u0 = rng.standard_normal(2)
        theta1, u1 = leapfrog(theta0, u0, 0.1, 25, self._gauss_grad(prec))
        theta2, u2 = leapfrog(theta1, -u1, 0.1, 25, self._gauss_grad(prec))
        np.testing.assert_allclose(theta2, theta0, atol=1e-10)
        np.testing.assert_allclose(-u2, u0, atol=1e-10)

    def test_energy_error_small(self):
        prec = np.eye(2)
        theta0 = np.array([1.0, 0.0])
        u0 = np.array([0.0, 1.0])
        theta1, u1 = leapfrog(theta0, u0, 0.01, 500, self._gauss_grad(prec))
        h0 = 0.5 * (theta0 @ prec @ theta0 + u0 @ u0)
        h1 = 0.5 * (theta1 @ prec @ theta1 + u1 @ u1)
        assert abs(h1 - h0) < 1e-4


class TestNuts:
    def test_standard_normal_moments(self):
        rng = np.random.default_rng(25)
        log_target = lambda x: -0.5 * float(x @ x)
        grad = lambda x: -x
        cfg = HmcConfig()
        theta = np.zeros(1)
        # Long adaptation: the averaged step size converges from above in
        # realised acceptance, so short warmups sit a few points high.
        for _ in range(5_000):
            theta, cfg = nuts_sample(log_target, grad, theta, cfg, True, rng)
        divergences_before = cfg.n_divergences
        draws = np.empty(20_000)
        accepts = np.empty(20_000)
        for i in range(20_000):
            theta, cfg = nuts_sample(log_target, grad, theta, cfg, False, rng)
            draws[i] = theta[0]
            accepts[i] = cfg.last_accept_stat
        assert cfg.frozen
        # No divergences once the step size is frozen.
        assert cfg.n_divergences == divergences_before
        assert draws.mean() == pytest.approx(0.0, abs=0.02)
        assert draws.var() == pytest.approx(1.0, abs=0.05)
        assert accepts.mean() == pytest.approx(cfg.target_accept, abs=0.05)

    def test_anisotropic_gaussian_covariance(self):
        # Condition number 100 through correlated scales.
        rng = np.random.default_rng(26)
        eigval = np.array([1.0, 2.5, 10.0, 40.0, 100.0])
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        cov = q @ np.diag(eigval) @ q.T
        prec = np.linalg.inv(cov)
        log_target = lambda x: -0.5 * float(x @ prec @ x)
        grad = lambda x: -(prec @ x)
        cfg = HmcConfig()
        theta = np.zeros(5)
        for _ in range(1_000):
            theta, cfg = nuts_sample(log_target, grad, theta, cfg, True, rng)
        n = 50_000
        draws = np.empty((n, 5))
        for i in range(n):
            theta, cfg = nuts_sample(log_target, grad, theta, cfg, False, rng)
            draws[i] = theta
        sample_cov = np.cov(draws.T)
        rel = np.linalg.norm(sample_cov - cov) / np.linalg.norm(cov)
        assert rel < 0.05

    def test_find_reasonable_step_size_scale(self):
        rng = np.random.default_rng(27)
        for scale in (0.1, 1.0, 10.0):
            eps = find_reasonable_step_size(
                lambda x, s=scale: -0.5 * float(x @ x) / s**2,
                lambda x, s=scale: -x / s**2,
                np.array([0.1 * scale]),
                rng,
            )
            # Step should track the target scale within an order of magnitude.
            assert 0.2 * scale < eps < 6.0 * scale
