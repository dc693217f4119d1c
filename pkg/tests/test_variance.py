import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_psd
from densum.core import DependencySummary
from densum.variance import (
    additive_variance,
    cluster_variance_identity,
    eta_bound,
    phi_bounds,
    summaries_from_covariance,
)


def reconstruct_and_compare(cov, w):
    """Round-trip a covariance through the summary and back; return the
    relative gap against the directly computed W cov W'."""
    W = np.atleast_2d(np.asarray(w, dtype=float))
    direct = W @ cov @ W.T
    dep = summaries_from_covariance(cov, w)
    decomp = additive_variance(w, np.diagonal(cov).copy(), dep)
    scale = max(1.0, float(np.abs(direct).max()))
    return float(np.abs(decomp.total - direct).max()) / scale, decomp


class TestAdditiveVariance:
    def test_independence_means_no_inflation(self):
        dep = DependencySummary(mu=0.0, phi=0.0, sigma_bar=0.0)
        out = additive_variance([0.5, 0.5], np.array([1.0, 4.0]), dep)
        assert out.total[0, 0] == pytest.approx(1.25)
        np.testing.assert_array_equal(out.total, out.naive)

    def test_scalar_phi_route(self):
        # n=4 equally weighted, unit variances, mu=2, phi=0.25:
        # naive = 4 * (1/16) = 1/4, total = naive * (1 + 0.5) = 3/8.
        dep = DependencySummary(mu=2.0, phi=0.25)
        out = additive_variance(np.full(4, 0.25), np.ones(4), dep)
        assert out.naive[0, 0] == pytest.approx(0.25)
        assert out.inflation[0, 0] == pytest.approx(1.5)
        assert out.total[0, 0] == pytest.approx(0.375)

    def test_sigma_bar_route_matches_phi_route(self, rng):
        cov = random_psd(rng, 9)
        w = rng.standard_normal(9)
        dep = summaries_from_covariance(cov, w)
        via_phi = additive_variance(w, np.diagonal(cov).copy(),
                                    DependencySummary(mu=dep.mu, phi=dep.phi))
        via_sbar = additive_variance(w, np.diagonal(cov).copy(),
                                     DependencySummary(mu=dep.mu, sigma_bar=dep.sigma_bar))
        np.testing.assert_allclose(via_phi.total, via_sbar.total, rtol=1e-12, atol=1e-14)

    def test_negative_variance_rejected(self):
        dep = DependencySummary(mu=1.0, phi=0.0)
        with pytest.raises(ValueError, match="nonnegative"):
            additive_variance([1.0, 1.0], np.array([1.0, -1.0]), dep)

    def test_requires_dependency_summary_type(self):
        with pytest.raises(TypeError):
            additive_variance([1.0], np.array([1.0]), {"mu": 0.0})


class TestSummaryExtraction:
    def test_diagonal_covariance_has_no_edges(self):
        dep = summaries_from_covariance(np.diag([1.0, 2.0, 3.0]), np.ones(3))
        assert dep.mu == 0.0
        assert dep.phi == 0.0
        assert dep.sigma_bar == 0.0

    def test_two_variable_closed_form(self):
        # cov = [[1, c], [c, 1]], w = (1, 1): one edge, mu = 1,
        # sigma_bar = (w1 w2 c + w2 w1 c) / 2 = c, phi = 2c / 2 = c.
        c = 0.3
        dep = summaries_from_covariance(np.array([[1.0, c], [c, 1.0]]), np.array([1.0, 1.0]))
        assert dep.mu == 1.0
        assert dep.sigma_bar == pytest.approx(c)
        assert dep.phi == pytest.approx(c)

    def test_float_noise_below_threshold_is_not_an_edge(self):
        cov = np.eye(3)
        cov[0, 1] = cov[1, 0] = 1e-15
        dep = summaries_from_covariance(cov, np.ones(3))
        assert dep.mu == 0.0

    def test_asymmetric_matrix_rejected(self):
        cov = np.array([[1.0, 0.2], [0.4, 1.0]])
        with pytest.raises(ValueError, match="symmetric"):
            summaries_from_covariance(cov, np.ones(2))

    def test_reconstruction_single_row(self, rng):
        for n in (2, 7, 23, 50):
            cov = random_psd(rng, n)
            gap, _ = reconstruct_and_compare(cov, rng.uniform(-2, 2, size=n))
            assert gap < 1e-12

    def test_reconstruction_weight_matrix(self, rng):
        cov = random_psd(rng, 15)
        W = rng.standard_normal((3, 15))
        gap, decomp = reconstruct_and_compare(cov, W)
        assert gap < 1e-12
        assert decomp.avg_cov.shape == (3, 3)

    def test_reconstruction_with_sparse_dependence(self, rng):
        # Block-diagonal: only within-block pairs are edges, so mu < n - 1.
        blocks = [random_psd(rng, 5) for _ in range(4)]
        cov = np.zeros((20, 20))
        for b, block in enumerate(blocks):
            cov[5 * b : 5 * b + 5, 5 * b : 5 * b + 5] = block
        dep = summaries_from_covariance(cov, np.ones(20))
        assert dep.mu == pytest.approx(4.0)
        gap, _ = reconstruct_and_compare(cov, rng.uniform(0.1, 1.0, size=20))
        assert gap < 1e-12


class TestPhiBounds:
    def test_closed_form(self):
        lo, hi = phi_bounds(mu=3.0, n=10)
        assert lo == pytest.approx(-1.0 / 3.0)
        assert hi == pytest.approx(3.0)

    def test_fully_connected_case(self):
        lo, hi = phi_bounds(mu=9.0, n=10)
        assert lo == pytest.approx(-1.0 / 9.0)
        assert hi == pytest.approx(1.0)

    def test_requires_positive_mu(self):
        with pytest.raises(ValueError, match="mu > 0"):
            phi_bounds(0.0, 5)

    @given(mu=st.floats(0.1, 50.0), n=st.integers(2, 1000))
    def test_extracted_phi_respects_bounds(self, mu, n):
        # any feasible phi keeps 1 + mu*phi between 0 and n (variance of a
        # sum of standardized variables cannot exceed n^2 terms)
        lo, hi = phi_bounds(mu, n)
        assert lo < 0 < hi
        assert 1.0 + mu * lo == pytest.approx(0.0, abs=1e-9)


class TestEtaBound:
    def test_homogeneous_variances(self):
        out = eta_bound(np.ones(5), mu=2.0)
        assert out.eta == 1.0
        assert out.inflation_factor == 3.0
        assert out.variance_bound == pytest.approx(15.0)

    def test_heterogeneous_variances(self):
        out = eta_bound(np.array([1.0, 2.0, 3.0]), mu=2.0)
        assert out.eta == pytest.approx(1.5)
        assert out.variance_bound == pytest.approx(4.0 * 6.0)

    def test_dominates_every_feasible_exchangeable_total(self, rng):
        # For exchangeable correlation rho in (0, 1) on equal weights the true
        # variance of the sum is sum sigma^2 + rho * sum_{i != j} s_i s_j,
        # which the eta bound must dominate at mu = n - 1.
        sigma = rng.uniform(0.5, 2.0, size=12)
        cov = np.outer(sigma, sigma)
        rho = 0.7
        cov = rho * cov + (1 - rho) * np.diag(sigma**2)
        total = float(np.ones(12) @ cov @ np.ones(12))
        out = eta_bound(sigma**2, mu=11.0)
        assert out.variance_bound >= total

    def test_all_zero_variances_rejected(self):
        with pytest.raises(ValueError, match="eta undefined"):
            eta_bound(np.zeros(3), mu=1.0)


class TestClusterIdentity:
    def test_scalar_closed_form(self):
        out = cluster_variance_identity([1.0, 2.0, 3.0], mu_T=1.5, sigma_bar_T=0.2)
        assert out.total[0, 0] == pytest.approx(6.0 + 3 * 1.5 * 0.2)
        assert out.n_clusters == 3

    def test_matrix_statistics(self):
        v = np.array([[2.0, 0.5], [0.5, 1.0]])
        out = cluster_variance_identity([v, v], mu_T=1.0, sigma_bar_T=np.zeros((2, 2)))
        np.testing.assert_allclose(out.total, 2 * v)

    def test_matches_direct_enumeration(self, rng):
        # Build a full covariance over K cluster statistics, then check the
        # identity against the brute-force total.
        K = 8
        cov = random_psd(rng, K)
        total_direct = float(np.ones(K) @ cov @ np.ones(K))
        off = cov - np.diag(np.diagonal(cov))
        n_edges = K * (K - 1) // 2
        sigma_bar = float(off.sum()) / (2 * n_edges)
        out = cluster_variance_identity(
            list(np.diagonal(cov)), mu_T=float(K - 1), sigma_bar_T=sigma_bar
        )
        assert out.total[0, 0] == pytest.approx(total_direct, rel=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="share one shape"):
            cluster_variance_identity([np.eye(2), np.eye(3)], 0.0, 0.0)


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(2, 24),
    seed=st.integers(0, 2**31 - 1),
    single_row=st.booleans(),
)
def test_identity_holds_for_arbitrary_psd_draws(n, seed, single_row):
    rng = np.random.default_rng(seed)
    cov = random_psd(rng, n)
    w = rng.standard_normal(n) if single_row else rng.standard_normal((2, n))
    gap, _ = reconstruct_and_compare(cov, w)
    assert gap < 1e-11
