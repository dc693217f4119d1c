"""Gaussian-copula sampling and the coverage experiments.

Dependent bounded samples are produced by pushing correlated standard
normals through marginal quantile functions (a Gaussian copula).  Three
experiment drivers reproduce the coverage tables:

* ``run_table1`` — Beta(10,10) means over an (n, phi) grid with an
  exchangeable correlation matrix,
* ``run_table2`` — Beta(shape, shape) means at n=500, phi=0.1, varying the
  shape (and hence the variance and the feasibility threshold),
* ``run_table3`` — a fixed-design regression with truncated-normal errors
  whose correlation mosaic is proportional to the intercept weight products.

Every replication r draws its normals from an independent counter-based
stream keyed by (master_seed, r), so results are bit-identical however the
replications are scheduled, and grid cells share common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from densum.concentration import a5_empirical, optimal_s, rule_of_thumb
from densum.core import SupportSpec, sequential_partition
from densum.kernels import (
    beta_quantile,
    cholesky,
    ensure_pd,
    seeded_stream,
    std_normal_quantile,
    truncnorm_quantile,
)

MARGINAL_FAMILIES = ("beta", "truncnormal", "uniform")

# The design draw for the regression experiment must never collide with a
# replication stream, so it lives far outside the replication index range.
DESIGN_STREAM_OFFSET = 2**32

TABLE1_GRID = {
    100: (0.0, 0.06, 0.1, 0.2),
    500: (0.0, 0.01, 0.05, 0.1),
    1500: (0.0, 0.004, 0.01, 0.02),
}
TABLE2_SHAPES = (10.0, 25.0, 50.0, 100.0)
TABLE3_NS = (100, 500, 1500)
TABLE3_PHIS = (0.0, 0.05, 0.1, 0.15)
TABLE3_BETA = np.array([20.0, 10.0])


@dataclass(frozen=True)
class MarginalSpec:
    """A bounded one-dimensional marginal with a closed-form quantile.

    Families: beta(a, b) on [0, 1]; truncnormal(mu, sigma, lo, hi);
    uniform(lo, hi).  The coverage experiments require symmetric members
    (beta(a, a); truncation symmetric about mu), which are U variables.
    """

    family: str
    params: tuple

    def __post_init__(self):
        if self.family not in MARGINAL_FAMILIES:
            raise ValueError(f"family must be one of {MARGINAL_FAMILIES}")
        p = self.params
        if self.family == "beta":
            if len(p) != 2 or p[0] <= 0 or p[1] <= 0:
                raise ValueError("beta needs two positive shape parameters")
        elif self.family == "truncnormal":
            if len(p) != 4 or p[1] <= 0 or p[2] >= p[3]:
                raise ValueError("truncnormal needs (mu, sigma>0, lo<hi)")
        else:
            if len(p) != 2 or p[0] >= p[1]:
                raise ValueError("uniform needs lo < hi")

    @classmethod
    def beta(cls, a, b):
        return cls(family="beta", params=(float(a), float(b)))

    @classmethod
    def truncnormal(cls, mu, sigma, lo, hi):
        return cls(family="truncnormal", params=(float(mu), float(sigma), float(lo), float(hi)))

    @classmethod
    def uniform(cls, lo, hi):
        return cls(family="uniform", params=(float(lo), float(hi)))

    @property
    def support(self):
        if self.family == "beta":
            return SupportSpec(0.0, 1.0)
        if self.family == "truncnormal":
            return SupportSpec(self.params[2], self.params[3])
        return SupportSpec(self.params[0], self.params[1])

    @property
    def mean(self):
        if self.family == "beta":
            a, b = self.params
            return a / (a + b)
        if self.family == "truncnormal":
            mu, sigma, lo, hi = self.params
            a, b = (lo - mu) / sigma, (hi - mu) / sigma
            pa, pb = _norm_pdf(a), _norm_pdf(b)
            z = ndtr(b) - ndtr(a)
            return mu + sigma * (pa - pb) / z
        lo, hi = self.params
        return 0.5 * (lo + hi)

    @property
    def variance(self):
        if self.family == "beta":
            a, b = self.params
            return a * b / ((a + b) ** 2 * (a + b + 1.0))
        if self.family == "truncnormal":
            mu, sigma, lo, hi = self.params
            a, b = (lo - mu) / sigma, (hi - mu) / sigma
            pa, pb = _norm_pdf(a), _norm_pdf(b)
            z = ndtr(b) - ndtr(a)
            shift = (pa - pb) / z
            return sigma * sigma * (1.0 + (a * pa - b * pb) / z - shift * shift)
        lo, hi = self.params
        return (hi - lo) ** 2 / 12.0

    @property
    def is_symmetric_u(self):
        if self.family == "beta":
            return self.params[0] == self.params[1]
        if self.family == "truncnormal":
            mu, _, lo, hi = self.params
            return math.isclose(mu - lo, hi - mu)
        return True

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if self.family == "beta":
            return beta_quantile(*self.params, u)
        if self.family == "truncnormal":
            return truncnorm_quantile(*self.params, u)
        lo, hi = self.params
        return lo + u * (hi - lo)


def _norm_pdf(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for one coverage experiment.

    ``n`` and ``phi`` (the exchangeable correlation for the mean tables, the
    mosaic scale phi* for the regression table) restrict the table's grid
    when set; ``shape`` restricts the table-2 shape grid.  ``c_star``
    controls the diagnostic exponential's size (defaults: 10 for means, 5
    for regressions).  ``wald_clusters`` overrides the sequential n/10
    clustering of the conventional comparator.
    """

    table: int
    n: int | None = None
    phi: float | None = None
    shape: float | None = None
    reps: int = 2000
    alpha: float = 0.05
    c_star: float | None = None
    master_seed: int = 0
    wald_clusters: int | None = None
    marginal: MarginalSpec | None = None

    def __post_init__(self):
        if self.table not in (1, 2, 3):
            raise ValueError("table must be 1, 2 or 3")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass(frozen=True)
class CoverageReport:
    """One table row: average endpoints, coverage rates, MGF diagnostics."""

    table: int
    n: int
    phi: float
    mean_lower: float
    mean_upper: float
    ci_wald: float
    ci_u: float
    ci_r: float | None
    a_hat: float
    av_star: float
    a5_verdict: str
    alpha_shape: float | None = None
    threshold: float | None = None
    coefficient: str | None = None
    seed: int = 0
    repair_lambda: float = 0.0

    def __post_init__(self):
        for rate in (self.ci_wald, self.ci_u, self.ci_r):
            if rate is not None and not 0.0 <= rate <= 1.0:
                raise ValueError("coverage rates must lie in [0, 1]")
        if self.mean_lower > self.mean_upper:
            raise ValueError("mean_lower must not exceed mean_upper")


# ---------------------------------------------------------------------------
# correlation matrices and the copula sampler
# ---------------------------------------------------------------------------


def exchangeable_corr(n, rho):
    """Correlation matrix with unit diagonal and constant off-diagonal rho.

    Positive definiteness requires -1/(n-1) < rho < 1 (the smallest
    eigenvalue is 1 - rho, the largest 1 + (n-1) rho).
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    if n > 1 and not -1.0 / (n - 1) < rho < 1.0:
        raise ValueError(
            f"exchangeable correlation needs -1/(n-1) = {-1.0 / (n - 1):.6f} < rho < 1"
        )
    corr = np.full((n, n), float(rho))
    np.fill_diagonal(corr, 1.0)
    return corr


def table3_corr(phi_star, w1, sigma=5.0, n=None):
    """Correlation mosaic for the regression experiment.

    Off-diagonal (i, j) is phi* n^2 w1_i w1_j / sigma^2 — proportional to the
    product of the intercept weights — clipped to [-0.999, 0.999], with unit
    diagonal, then repaired to positive definiteness.  Returns
    (matrix, PDRepair); the repair's shrinkage is reported in result rows.
    """
    w1 = np.asarray(w1, dtype=float).ravel()
    size = w1.shape[0] if n is None else int(n)
    if size != w1.shape[0]:
        raise ValueError("n disagrees with the weight row length")
    scale = phi_star * size * size / (sigma * sigma)
    corr = np.clip(scale * np.outer(w1, w1), -0.999, 0.999)
    np.fill_diagonal(corr, 1.0)
    return ensure_pd(corr)


def copula_sample(corr, marginal, n, reps, seed):
    """Draw a reps x n outcome matrix from a Gaussian copula.

    Row r is marginal.quantile(Phi(L z_r)) with L the Cholesky factor of
    ``corr`` and z_r standard normal from the counter-based stream
    (seed, r) — deterministic per replication, whatever the scheduling.
    A comonotone matrix (all cells 1) is handled directly, since it is
    singular: every column repeats the first coordinate.
    """
    corr = np.asarray(corr, dtype=float)
    n = int(n)
    reps = int(reps)
    if corr.shape != (n, n):
        raise ValueError(f"correlation matrix must be {n} x {n}, got {corr.shape}")
    Z = np.empty((reps, n))
    for r in range(reps):
        Z[r] = seeded_stream(seed, r).standard_normal(n)
    if n > 1 and np.all(corr == 1.0):
        X = np.broadcast_to(Z[:, :1], (reps, n))
    else:
        L = cholesky(corr)
        X = Z @ L.T
    return marginal.quantile(ndtr(X))


# ---------------------------------------------------------------------------
# vectorized conventional comparator
# ---------------------------------------------------------------------------


def _sandwich_wald_covers(X, B, E, partition, beta_true, z):
    """Exchangeable-sandwich Wald coverage, vectorized across replications.

    Mirrors estimators.gee_exchangeable_vcov cell by cell (the per-replication
    agreement is cross-checked in the test suite); clusters of a sequential
    partition are contiguous, so cluster sums reduce to reduceat calls.

    X is the n x p design shared by all replications, B the reps x p
    coefficient matrix, E the reps x n residual matrix.  Returns a reps x p
    boolean matrix of |B - beta_true| <= z * SE.
    """
    n, p = X.shape
    sizes = partition.cluster_sizes
    offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))

    Sx = np.add.reduceat(X, offsets, axis=0)  # K x p cluster sums of columns
    XtX = X.T @ X
    Se = np.add.reduceat(E, offsets, axis=1)  # reps x K
    Se2 = np.add.reduceat(E * E, offsets, axis=1)
    SxE = np.add.reduceat(E[:, None, :] * X.T[None, :, :], offsets, axis=2)  # reps x p x K

    sigma2 = np.mean(E * E, axis=1)
    n_pairs = float(np.sum(sizes * (sizes - 1) / 2.0))
    cross = 0.5 * (np.sum(Se * Se, axis=1) - np.sum(Se2, axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where((sigma2 > 0) & (n_pairs > 0), cross / (n_pairs * sigma2), 0.0)
    max_size = float(np.max(sizes))
    lo = -1.0 / (max_size - 1.0) + 1e-6 if max_size > 1 else -1.0 + 1e-6
    rho = np.clip(rho, lo, 1.0 - 1e-6)

    c = rho[:, None] / (1.0 + (sizes[None, :] - 1.0) * rho[:, None])  # reps x K
    U = SxE.transpose(0, 2, 1) - (c * Se)[:, :, None] * Sx[None, :, :]  # reps x K x p
    meat = np.einsum("rkp,rkq->rpq", U, U)
    D = XtX[None, :, :] - np.einsum("rk,kp,kq->rpq", c, Sx, Sx)
    vcov = np.linalg.inv(D) @ meat @ np.linalg.inv(D)
    se = np.sqrt(np.einsum("rpp->rp", vcov))
    return np.abs(B - beta_true[None, :]) <= z * se


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------


def _mean_cell(table, n, phi, marginal, config, alpha_shape=None):
    """One (n, phi) cell of a mean-coverage experiment."""
    reps, alpha, seed = config.reps, config.alpha, config.master_seed
    corr = exchangeable_corr(n, phi)
    Y = copula_sample(corr, marginal, n, reps, seed)

    mu_true = marginal.mean
    R = marginal.support.range
    M = marginal.support.length / 2.0
    ybar = np.mean(Y, axis=1)
    half_u = R * math.sqrt(math.log(2.0 / alpha) / (6.0 * n))
    covered_u = np.abs(ybar - mu_true) <= half_u

    K = config.wald_clusters if config.wald_clusters is not None else n // 10
    partition = sequential_partition(n, K)
    z = std_normal_quantile(1.0 - alpha / 2.0)
    design = np.ones((n, 1))
    resid = Y - ybar[:, None]
    covered_wald = _sandwich_wald_covers(
        design, ybar[:, None], resid, partition, np.array([mu_true]), z
    )[:, 0]

    c_star = config.c_star if config.c_star is not None else 10.0
    w = np.full(n, 1.0 / n)
    s = optimal_s(theorem="diagnostic", M=M, c_star=c_star, sum_w2=1.0 / n, alpha=alpha)
    report = a5_empirical(Y - mu_true, w, s, M)

    bound = rule_of_thumb(w, marginal.variance, R)
    return CoverageReport(
        table=table,
        n=n,
        phi=phi,
        mean_lower=float(np.mean(ybar) - half_u),
        mean_upper=float(np.mean(ybar) + half_u),
        ci_wald=float(np.mean(covered_wald)),
        ci_u=float(np.mean(covered_u)),
        ci_r=None,
        a_hat=report.a_hat,
        av_star=report.av_star,
        a5_verdict=report.verdict,
        alpha_shape=alpha_shape,
        threshold=bound / (n - 1),
        coefficient=None,
        seed=seed,
        repair_lambda=0.0,
    )


def run_table1(config):
    """Beta(10,10) mean coverage over the (n, phi) grid.

    ``config.n`` / ``config.phi`` restrict the grid; a phi override outside
    the standard grid runs as its own cell (it must keep the exchangeable
    matrix positive definite).
    """
    marginal = config.marginal if config.marginal is not None else MarginalSpec.beta(10, 10)
    rows = []
    ns = (config.n,) if config.n is not None else tuple(TABLE1_GRID)
    for n in ns:
        if n not in TABLE1_GRID:
            raise ValueError(f"table 1 is defined for n in {tuple(TABLE1_GRID)}")
        if config.phi is not None:
            phis = (config.phi,)
        else:
            phis = TABLE1_GRID[n]
        for phi in phis:
            rows.append(_mean_cell(1, n, phi, marginal, config))
    return rows


def run_table2(config):
    """Beta(shape, shape) mean coverage at n=500, phi=0.1, over the shape grid.

    The threshold column is the feasibility bound divided by n - 1: the
    exchangeable correlation beyond which the diagnostic predicts breakdown.
    """
    n = config.n if config.n is not None else 500
    phi = config.phi if config.phi is not None else 0.1
    shapes = (config.shape,) if config.shape is not None else TABLE2_SHAPES
    rows = []
    for shape in shapes:
        if shape <= 0:
            raise ValueError("beta shape must be positive")
        marginal = MarginalSpec.beta(shape, shape)
        rows.append(_mean_cell(2, n, phi, marginal, config, alpha_shape=float(shape)))
    return rows


def table3_design(n, master_seed):
    """The fixed regressor draw for the regression experiment.

    t is drawn once per (n, master_seed) from truncnormal(1, 1, -5, 5) on a
    stream disjoint from every replication stream, then reused across all
    replications and phi* values at that n.
    """
    stream = seeded_stream(master_seed, DESIGN_STREAM_OFFSET + int(n))
    u = ndtr(stream.standard_normal(int(n)))  # open-interval uniforms
    t = truncnorm_quantile(1.0, 1.0, -5.0, 5.0, u)
    return np.column_stack([np.ones(int(n)), t])


def _weight_rows(X):
    # (X'X)^{-1} X' via least squares on the identity; X here is tiny-p.
    return np.linalg.solve(X.T @ X, X.T)


def run_table3(config):
    """Regression coverage: y = 20 + 10 t + eps over the (n, phi*) grid.

    Per cell: errors are truncnormal(0, 5, -20, 20) under the intercept-weight
    correlation mosaic; each replication is fit by least squares; coverage is
    recorded for the conventional Wald comparator, the known-range confidence
    set (R = 40), and the residual-range plug-in (the pooled residual range
    standing in for 2M).  One report row per coefficient per cell.
    """
    marginal = (
        config.marginal
        if config.marginal is not None
        else MarginalSpec.truncnormal(0.0, 5.0, -20.0, 20.0)
    )
    reps, alpha, seed = config.reps, config.alpha, config.master_seed
    c_star = config.c_star if config.c_star is not None else 5.0
    root_log = math.sqrt(math.log(2.0 / alpha) / 6.0)
    R = marginal.support.range
    M = marginal.support.length / 2.0

    ns = (config.n,) if config.n is not None else TABLE3_NS
    phis = (config.phi,) if config.phi is not None else TABLE3_PHIS
    rows = []
    for n in ns:
        n = int(n)
        X = table3_design(n, seed)
        W = _weight_rows(X)
        sum_w2 = np.sum(W * W, axis=1)
        K = config.wald_clusters if config.wald_clusters is not None else n // 10
        partition = sequential_partition(n, K)
        z = std_normal_quantile(1.0 - alpha / 2.0)
        for phi_star in phis:
            corr, repair = table3_corr(phi_star, W[0], sigma=5.0)
            eps = copula_sample(corr, marginal, n, reps, seed)
            B = TABLE3_BETA[None, :] + eps @ W.T
            resid = eps - (eps @ W.T) @ X.T

            covered_wald = _sandwich_wald_covers(X, B, resid, partition, TABLE3_BETA, z)
            rhat = np.max(resid, axis=1) - np.min(resid, axis=1)
            for s_idx, name in enumerate(("beta0", "beta1")):
                err = np.abs(B[:, s_idx] - TABLE3_BETA[s_idx])
                half_u = R * math.sqrt(sum_w2[s_idx]) * root_log
                half_r = rhat * math.sqrt(sum_w2[s_idx]) * root_log
                s_diag = optimal_s(
                    theorem="diagnostic", M=M, c_star=c_star, sum_w2=sum_w2[s_idx], alpha=alpha
                )
                report = a5_empirical(eps, W[s_idx], s_diag, M)
                rows.append(
                    CoverageReport(
                        table=3,
                        n=n,
                        phi=phi_star,
                        mean_lower=float(np.mean(B[:, s_idx]) - half_u),
                        mean_upper=float(np.mean(B[:, s_idx]) + half_u),
                        ci_wald=float(np.mean(covered_wald[:, s_idx])),
                        ci_u=float(np.mean(err <= half_u)),
                        ci_r=float(np.mean(err <= half_r)),
                        a_hat=report.a_hat,
                        av_star=report.av_star,
                        a5_verdict=report.verdict,
                        alpha_shape=None,
                        threshold=None,
                        coefficient=name,
                        seed=seed,
                        repair_lambda=repair.lam,
                    )
                )
    return rows


def run_table(config):
    """Dispatch a config to its table driver."""
    if config.table == 1:
        return run_table1(config)
    if config.table == 2:
        return run_table2(config)
    return run_table3(config)
