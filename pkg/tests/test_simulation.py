import math

import numpy as np
import pytest
from scipy import stats

from densum.estimators import gee_exchangeable_vcov, ols_fit
from densum.kernels import cholesky, std_normal_quantile
from densum.simulation import (
    TABLE1_GRID,
    TABLE2_SHAPES,
    CoverageReport,
    ExperimentConfig,
    MarginalSpec,
    _sandwich_wald_covers,
    copula_sample,
    exchangeable_corr,
    run_table,
    run_table1,
    run_table2,
    run_table3,
    table3_corr,
    table3_design,
)
from densum.core import sequential_partition


class TestMarginalSpec:
    def test_beta_moments(self):
        m = MarginalSpec.beta(10, 10)
        assert m.mean == pytest.approx(0.5)
        assert m.variance == pytest.approx(1.0 / 84.0)
        assert m.support.lower == 0.0 and m.support.upper == 1.0
        assert m.is_symmetric_u

    def test_asymmetric_beta(self):
        m = MarginalSpec.beta(2, 5)
        assert m.mean == pytest.approx(2.0 / 7.0)
        assert m.variance == pytest.approx(10.0 / (49.0 * 8.0))
        assert not m.is_symmetric_u

    def test_uniform_moments(self):
        m = MarginalSpec.uniform(-1.0, 3.0)
        assert m.mean == pytest.approx(1.0)
        assert m.variance == pytest.approx(16.0 / 12.0)
        assert m.support.range == pytest.approx(4.0)
        assert m.is_symmetric_u

    @pytest.mark.parametrize(
        "mu, sigma, lo, hi",
        [(0.0, 5.0, -20.0, 20.0), (1.0, 1.0, -5.0, 5.0), (2.0, 3.0, -1.0, 4.0)],
    )
    def test_truncnormal_moments_against_scipy(self, mu, sigma, lo, hi):
        m = MarginalSpec.truncnormal(mu, sigma, lo, hi)
        a, b = (lo - mu) / sigma, (hi - mu) / sigma
        dist = stats.truncnorm(a, b, loc=mu, scale=sigma)
        assert m.mean == pytest.approx(dist.mean(), rel=1e-10)
        assert m.variance == pytest.approx(dist.var(), rel=1e-10)

    def test_truncnormal_symmetry_flag(self):
        assert MarginalSpec.truncnormal(0, 5, -20, 20).is_symmetric_u
        assert not MarginalSpec.truncnormal(1, 1, -5, 5).is_symmetric_u

    def test_quantiles_match_scipy(self):
        u = np.linspace(0.01, 0.99, 23)
        np.testing.assert_allclose(
            MarginalSpec.beta(10, 10).quantile(u), stats.beta(10, 10).ppf(u), atol=1e-10
        )
        np.testing.assert_allclose(
            MarginalSpec.truncnormal(1, 2, -3, 7).quantile(u),
            stats.truncnorm(-2, 3, loc=1, scale=2).ppf(u),
            atol=1e-9,
        )
        np.testing.assert_allclose(
            MarginalSpec.uniform(-1, 3).quantile(u), -1 + 4 * u, atol=1e-12
        )

    @pytest.mark.parametrize(
        "bad",
        [
            lambda: MarginalSpec.beta(0, 1),
            lambda: MarginalSpec.beta(2, -1),
            lambda: MarginalSpec.truncnormal(0, 0, -1, 1),
            lambda: MarginalSpec.truncnormal(0, 1, 2, 2),
            lambda: MarginalSpec.uniform(1, 1),
            lambda: MarginalSpec(family="cauchy", params=(0.0, 1.0)),
        ],
    )
    def test_invalid_parameters(self, bad):
        with pytest.raises(ValueError):
            bad()


class TestCorrelationBuilders:
    def test_exchangeable_structure(self):
        corr = exchangeable_corr(4, 0.3)
        assert corr.shape == (4, 4)
        np.testing.assert_array_equal(np.diag(corr), 1.0)
        off = corr[~np.eye(4, dtype=bool)]
        np.testing.assert_array_equal(off, 0.3)

    def test_exchangeable_near_lower_edge_is_pd(self):
        corr = exchangeable_corr(3, -0.49)
        assert np.linalg.eigvalsh(corr).min() > 0

    @pytest.mark.parametrize("rho", [-0.6, -0.5, 1.0, 1.4])
    def test_exchangeable_infeasible(self, rho):
        with pytest.raises(ValueError, match="-1/"):
            exchangeable_corr(3, rho)

    def test_exchangeable_degenerate_size(self):
        np.testing.assert_array_equal(exchangeable_corr(1, 0.9), [[1.0]])
        with pytest.raises(ValueError):
            exchangeable_corr(0, 0.0)

    def test_table3_zero_scale_is_identity(self):
        corr, repair = table3_corr(0.0, [0.1, -0.2, 0.3])
        np.testing.assert_array_equal(corr, np.eye(3))
        assert repair.lam == 0.0

    def test_table3_entries_follow_the_weight_products(self):
        w1 = np.array([0.1, 0.2, 0.3])
        corr, repair = table3_corr(0.5, w1, sigma=5.0)
        assert repair.lam == 0.0
        scale = 0.5 * 9.0 / 25.0
        assert corr[0, 1] == pytest.approx(scale * 0.1 * 0.2)
        assert corr[1, 2] == pytest.approx(scale * 0.2 * 0.3)
        np.testing.assert_array_equal(np.diag(corr), 1.0)

    def test_table3_clipping_can_force_a_repair(self):
        # uneven clipping of the rank-one mosaic makes it indefinite;
        # the builder must hand back a usable (repaired) matrix
        corr, repair = table3_corr(25.0 / 18.0, [3.0, 1.0, 1.0])
        assert repair.lam > 0.0
        assert repair.changed
        np.testing.assert_allclose(np.diag(corr), 1.0, atol=1e-12)
        cholesky(corr)  # must not raise

    def test_table3_length_mismatch(self):
        with pytest.raises(ValueError, match="disagrees"):
            table3_corr(0.1, [0.1, 0.2], n=3)


class TestCopulaSample:
    def test_deterministic_and_schedule_independent(self):
        corr = exchangeable_corr(6, 0.2)
        m = MarginalSpec.beta(10, 10)
        once = copula_sample(corr, m, 6, 12, seed=5)
        again = copula_sample(corr, m, 6, 12, seed=5)
        np.testing.assert_array_equal(once, again)
        # each replication has its own stream, so a shorter run is a prefix
        np.testing.assert_array_equal(copula_sample(corr, m, 6, 4, seed=5), once[:4])

    def test_seed_changes_the_draw(self):
        corr = exchangeable_corr(4, 0.0)
        m = MarginalSpec.uniform(0, 1)
        assert not np.array_equal(
            copula_sample(corr, m, 4, 3, seed=1), copula_sample(corr, m, 4, 3, seed=2)
        )

    def test_comonotone_columns_are_identical(self):
        m = MarginalSpec.beta(10, 10)
        Y = copula_sample(np.ones((5, 5)), m, 5, 40, seed=9)
        for j in range(1, 5):
            np.testing.assert_array_equal(Y[:, j], Y[:, 0])

    def test_independent_columns_are_uncorrelated(self):
        m = MarginalSpec.uniform(0, 1)
        Y = copula_sample(np.eye(2), m, 2, 4000, seed=3)
        r = np.corrcoef(Y[:, 0], Y[:, 1])[0, 1]
        assert abs(r) < 0.05

    def test_dependent_uniforms_match_the_closed_form_correlation(self):
        # grades of a bivariate normal have Pearson correlation
        # (6/pi) arcsin(rho/2); for rho = 1/2 that is about 0.4826
        m = MarginalSpec.uniform(0, 1)
        Y = copula_sample(exchangeable_corr(2, 0.5), m, 2, 4000, seed=11)
        r = np.corrcoef(Y[:, 0], Y[:, 1])[0, 1]
        assert r == pytest.approx(6.0 / math.pi * math.asin(0.25), abs=0.05)

    def test_marginal_fidelity(self):
        m = MarginalSpec.beta(10, 10)
        Y = copula_sample(exchangeable_corr(5, 0.3), m, 5, 3000, seed=7)
        assert float(Y.mean()) == pytest.approx(0.5, abs=0.005)
        assert float(Y.var()) == pytest.approx(1.0 / 84.0, abs=0.001)
        assert Y.min() >= 0.0 and Y.max() <= 1.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="must be 3 x 3"):
            copula_sample(np.eye(2), MarginalSpec.uniform(0, 1), 3, 2, seed=0)


class TestVectorizedSandwich:
    def test_agrees_with_the_reference_route_per_replication(self, rng):
        # the experiment drivers use the vectorized comparator; it must make
        # the same cover/miss call as the one-fit-at-a-time estimator
        n, reps = 40, 25
        X = np.column_stack([np.ones(n), rng.standard_normal(n)])
        beta = np.array([1.0, -2.0])
        partition = sequential_partition(n, 7)  # sizes 5 and 6: uneven on purpose
        z = std_normal_quantile(0.975)

        B = np.empty((reps, 2))
        E = np.empty((reps, n))
        expected = np.empty((reps, 2), dtype=bool)
        ys = X @ beta + rng.standard_normal((reps, n))
        for r in range(reps):
            fit = ols_fit(X, ys[r])
            B[r] = fit.coefficients
            E[r] = fit.residuals
            coef, vcov, _ = gee_exchangeable_vcov(X, ys[r], partition)
            se = np.sqrt(np.diag(vcov))
            expected[r] = np.abs(coef - beta) <= z * se

        got = _sandwich_wald_covers(X, B, E, partition, beta, z)
        np.testing.assert_array_equal(got, expected)

    def test_intercept_only_agreement(self, rng):
        n, reps = 30, 15
        X = np.ones((n, 1))
        partition = sequential_partition(n, 3)
        z = std_normal_quantile(0.975)
        ys = 0.3 + rng.standard_normal((reps, n))
        B = ys.mean(axis=1)[:, None]
        E = ys - B
        got = _sandwich_wald_covers(X, B, E, partition, np.array([0.3]), z)
        for r in range(reps):
            coef, vcov, _ = gee_exchangeable_vcov(X, ys[r], partition)
            covered = abs(coef[0] - 0.3) <= z * math.sqrt(vcov[0, 0])
            assert got[r, 0] == covered


class TestConfigAndReport:
    @pytest.mark.parametrize(
        "kwargs",
        [{"table": 4}, {"table": 1, "reps": 0}, {"table": 1, "alpha": 1.2}],
    )
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            ExperimentConfig(**kwargs)

    def test_report_rate_validation(self):
        with pytest.raises(ValueError, match="coverage rates"):
            CoverageReport(
                table=1, n=10, phi=0.0, mean_lower=0.0, mean_upper=1.0,
                ci_wald=1.2, ci_u=0.5, ci_r=None,
                a_hat=1.0, av_star=1.0, a5_verdict="holds",
            )

    def test_report_endpoint_ordering(self):
        with pytest.raises(ValueError, match="mean_lower"):
            CoverageReport(
                table=1, n=10, phi=0.0, mean_lower=1.0, mean_upper=0.0,
                ci_wald=0.5, ci_u=0.5, ci_r=None,
                a_hat=1.0, av_star=1.0, a5_verdict="holds",
            )


class TestTable1:
    def test_single_cell_shape(self):
        config = ExperimentConfig(table=1, n=100, phi=0.1, reps=40)
        rows = run_table1(config)
        assert len(rows) == 1
        row = rows[0]
        assert (row.table, row.n, row.phi) == (1, 100, 0.1)
        assert 0.0 <= row.ci_u <= 1.0 and 0.0 <= row.ci_wald <= 1.0
        assert row.ci_r is None and row.coefficient is None and row.alpha_shape is None
        assert row.a5_verdict in ("holds", "boundary", "violated")
        # Beta(10,10): R^2/(12 sigma^2) - 1 = 6, spread over the n-1 neighbours
        assert row.threshold == pytest.approx(6.0 / 99.0, rel=1e-12)

    def test_full_grid_without_restrictions(self):
        rows = run_table1(ExperimentConfig(table=1, reps=2))
        assert len(rows) == sum(len(v) for v in TABLE1_GRID.values())
        assert [(r.n, r.phi) for r in rows] == [
            (n, phi) for n in sorted(TABLE1_GRID) for phi in TABLE1_GRID[n]
        ]

    def test_unsupported_n_rejected(self):
        with pytest.raises(ValueError, match="table 1 is defined"):
            run_table1(ExperimentConfig(table=1, n=200, reps=2))

    def test_phi_override_runs_off_grid(self):
        rows = run_table1(ExperimentConfig(table=1, n=100, phi=0.3, reps=5))
        assert rows[0].phi == 0.3

    def test_infeasible_phi_override_rejected(self):
        with pytest.raises(ValueError, match="-1/"):
            run_table1(ExperimentConfig(table=1, n=100, phi=-0.9, reps=2))

    def test_deterministic_rows(self):
        config = ExperimentConfig(table=1, n=100, phi=0.06, reps=25, master_seed=4)
        assert run_table1(config) == run_table1(config)


class TestTable2:
    def test_thresholds_follow_the_feasibility_formula(self):
        rows = run_table2(ExperimentConfig(table=2, reps=3))
        assert [r.alpha_shape for r in rows] == list(TABLE2_SHAPES)
        for row, shape in zip(rows, TABLE2_SHAPES):
            assert row.threshold == pytest.approx((2 * shape - 2) / (3 * 499), rel=1e-12)
            assert row.n == 500 and row.phi == 0.1

    def test_shape_restriction(self):
        rows = run_table2(ExperimentConfig(table=2, shape=25.0, reps=3))
        assert len(rows) == 1 and rows[0].alpha_shape == 25.0

    def test_bad_shape(self):
        with pytest.raises(ValueError, match="shape must be positive"):
            run_table2(ExperimentConfig(table=2, shape=-1.0, reps=2))


class TestTable3:
    def test_design_is_fixed_and_bounded(self):
        X = table3_design(100, master_seed=0)
        np.testing.assert_array_equal(X, table3_design(100, master_seed=0))
        assert X.shape == (100, 2)
        np.testing.assert_array_equal(X[:, 0], 1.0)
        assert X[:, 1].min() >= -5.0 and X[:, 1].max() <= 5.0
        assert not np.array_equal(X, table3_design(100, master_seed=1))

    def test_single_cell_rows(self):
        rows = run_table3(ExperimentConfig(table=3, n=100, phi=0.1, reps=30))
        assert [r.coefficient for r in rows] == ["beta0", "beta1"]
        for row in rows:
            assert row.table == 3 and row.n == 100 and row.phi == 0.1
            assert row.ci_r is not None and 0.0 <= row.ci_r <= 1.0
            assert row.threshold is None and row.alpha_shape is None
            assert row.repair_lambda >= 0.0

    def test_zero_mosaic_reports_no_repair(self):
        rows = run_table3(ExperimentConfig(table=3, n=100, phi=0.0, reps=10))
        assert all(r.repair_lambda == 0.0 for r in rows)

    def test_intercept_interval_brackets_the_truth_at_independence(self):
        rows = run_table3(ExperimentConfig(table=3, n=100, phi=0.0, reps=40))
        beta0 = rows[0]
        assert beta0.mean_lower < 20.0 < beta0.mean_upper


def test_run_table_dispatch():
    assert run_table(ExperimentConfig(table=1, n=100, phi=0.0, reps=2))[0].table == 1
    assert run_table(ExperimentConfig(table=2, shape=10.0, reps=2))[0].table == 2
    assert run_table(ExperimentConfig(table=3, n=100, phi=0.0, reps=2))[0].table == 3
