"""Additive estimators and their variance machinery.

Least squares is treated throughout as an additive statistic: with
W = (X'X)^{-1} X' the fit satisfies B - beta = W eps row by row, so every
coefficient is a weighted sum of the individual errors and the tail bounds
in :mod:`densum.concentration` apply directly to it.  This module provides

* ``ols_fit`` — least squares with the weight rows made explicit,
* ``meat_estimator`` / ``cluster_robust`` / ``partition_compare`` — variance
  estimators for additive statistics under dependence,
* ``residual_range`` — the plug-in range estimate feeding the
  residual-range confidence sets,
* ``irwls_fit`` — iteratively reweighted least squares with the final
  additive representation extracted at convergence,
* ``gee_exchangeable_wald`` — the conventional sandwich/Wald comparator,
* ``acf_phi_hat`` — autocorrelation-based dependence summary for series data.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from densum.core import ConfidenceSet, Partition
from densum.kernels import std_normal_quantile


class ConvergenceError(RuntimeError):
    """Raised when an iterative fit fails to meet its stopping rule."""


# ---------------------------------------------------------------------------
# least squares with explicit weight rows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegressionFit:
    """A linear fit carrying its additive representation.

    ``weight_rows`` holds W = (X'X)^{-1} X' (one row per coefficient), so
    ``coefficients`` equals ``weight_rows @ outcomes`` and, on data generated
    as y = X beta + eps, the estimation error is exactly ``weight_rows @ eps``.
    """

    design: np.ndarray
    outcomes: np.ndarray
    coefficients: np.ndarray
    weight_rows: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def p(self):
        return self.design.shape[1]


def _qr_weight_rows(X):
    """Weight rows (X'X)^{-1} X' via a thin QR factorization.

    Solving R W = Q' avoids forming X'X, whose squared condition number
    would contaminate the per-observation weights that the confidence sets
    consume.  Rank deficiency is reported by the column whose R diagonal
    collapses.
    """
    Q, R = np.linalg.qr(X)
    tol = 1e-10 * np.linalg.norm(X)
    diag = np.abs(np.diag(R))
    small = np.nonzero(diag <= tol)[0]
    if small.size:
        raise ValueError(
            f"design is rank deficient: column {int(small[0])} is linearly "
            "dependent on the preceding columns"
        )
    from scipy.linalg import solve_triangular

    return solve_triangular(R, Q.T, lower=False)


def ols_fit(X, y):
    """Ordinary least squares with the weight rows W = (X'X)^{-1} X' exposed.

    Input
    -----
    X : (n, p) design matrix, full column rank
    y : (n,) outcomes

    Output
    ------
    RegressionFit with coefficients = W y, fitted = X B, residuals = y - X B.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("design and outcomes disagree on n")
    if X.shape[0] < X.shape[1]:
        raise ValueError("need at least as many observations as columns")
    W = _qr_weight_rows(X)
    B = W @ y
    fitted = X @ B
    return RegressionFit(
        design=X,
        outcomes=y,
        coefficients=B,
        weight_rows=W,
        fitted=fitted,
        residuals=y - fitted,
    )


# ---------------------------------------------------------------------------
# variance estimators for additive statistics
# ---------------------------------------------------------------------------


def meat_estimator(fit, s, t=None):
    """Plug-in variance (or covariance) estimate sum_i W_si W_ti e_i^2.

    Evaluated as sum (W_si e_i)(W_ti e_i) so the all-singleton
    cluster-robust estimate reproduces it bit for bit.
    """
    if t is None:
        t = s
    W = np.asarray(fit.weight_rows, dtype=float)
    e = np.asarray(fit.residuals, dtype=float)
    return float(np.sum((W[s] * e) * (W[t] * e)))


@dataclass(frozen=True)
class ClusterVarianceEstimate:
    """Cluster-robust variance of one coefficient: sum_k (sum_{j in k} W_sj e_j)^2."""

    value: float
    partition: Partition
    per_cluster: np.ndarray

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("cluster variance estimate cannot be negative")


def cluster_robust(fit, partition, s):
    """Cluster-robust variance estimate for coefficient s under a partition.

    The singleton partition reproduces ``meat_estimator`` exactly, since each
    squared cluster sum collapses to one squared weighted residual.
    """
    W = np.asarray(fit.weight_rows, dtype=float)
    e = np.asarray(fit.residuals, dtype=float)
    z = W[s] * e
    if z.shape[0] != partition.assignment.shape[0]:
        raise ValueError("partition length does not match the fit")
    sums = np.bincount(partition.assignment - 1, weights=z, minlength=partition.n_clusters)
    per_cluster = sums * sums
    return ClusterVarianceEstimate(
        value=float(np.sum(per_cluster)),
        partition=partition,
        per_cluster=per_cluster,
    )


@dataclass(frozen=True)
class PartitionComparison:
    """Ranked cluster-variance estimates across candidate partitions."""

    values: np.ndarray
    differences: np.ndarray
    recommended: int
    is_tie: bool

    @property
    def ranking(self):
        # Stable, so equal values keep their input order.
        return np.argsort(-self.values, kind="stable")


def partition_compare(fit, partitions, s, tie_tol=None):
    """Compare candidate partitions by estimated variance; recommend the largest.

    Since clustering can only shift covariance mass into the estimate, the
    partition with the highest estimate is the conservative choice.  Ties
    within ``tie_tol`` (default 1e-12 relative to the largest value) are
    flagged and broken by input order.
    """
    if len(partitions) < 2:
        raise ValueError("need at least two partitions to compare")
    values = np.array([cluster_robust(fit, part, s).value for part in partitions])
    if tie_tol is None:
        tie_tol = 1e-12 * max(1.0, float(np.max(values)))
    recommended = int(np.argmax(values))
    top = values[recommended]
    is_tie = bool(np.sum(np.abs(values - top) <= tie_tol) > 1)
    return PartitionComparison(
        values=values,
        differences=values[:, None] - values[None, :],
        recommended=recommended,
        is_tie=is_tie,
    )


def residual_range(fit, s):
    """Sample range of the weighted residuals W_s e, the plug-in for one
    coefficient's per-observation range.

    A zero range (all weighted residuals equal) is returned as 0.0 with a
    warning, since a degenerate spread makes the downstream interval
    collapse.
    """
    W = np.asarray(fit.weight_rows, dtype=float)
    e = np.asarray(fit.residuals, dtype=float)
    if e.shape[0] < 2:
        raise ValueError("need at least two observations for a range")
    z = W[s] * e
    spread = float(np.max(z) - np.min(z))
    if spread == 0.0:
        warnings.warn("weighted residuals have degenerate (zero) spread", stacklevel=2)
    return spread


# ---------------------------------------------------------------------------
# iteratively reweighted least squares
# ---------------------------------------------------------------------------

IRWLS_LINKS = ("identity", "logit", "log")


def _link_funcs(link):
    if link == "identity":
        return (
            lambda eta: eta,  # mean
            lambda eta: np.ones_like(eta),  # d mean / d eta
            lambda mu: np.ones_like(mu),  # variance function
        )
    if link == "logit":
        def mean(eta):
            return 1.0 / (1.0 + np.exp(-eta))

        return mean, lambda eta: mean(eta) * (1.0 - mean(eta)), lambda mu: mu * (1.0 - mu)
    if link == "log":
        return np.exp, np.exp, lambda mu: mu
    raise ValueError(f"link must be one of {IRWLS_LINKS}")


@dataclass(frozen=True)
class IRWLSFit:
    """Converged IRWLS fit with its additive representation.

    ``weight_rows`` is (d' V^{-1} d)^{-1} d' V^{-1} evaluated at the final
    iterate, with d the mean Jacobian and V the working variance, so the
    estimation error is approximately ``weight_rows @ (y - fitted)``.
    """

    design: np.ndarray
    outcomes: np.ndarray
    link: str
    coefficients: np.ndarray
    weight_rows: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    trace: tuple
    n_iter: int
    converged: bool


def irwls_fit(X, y, link="identity", tol=1e-10, max_iter=50):
    """Iteratively reweighted least squares for identity, logit or log links.

    Iterates weighted least squares on the working response
    z = eta + (y - mu) / mu'(eta) with weights mu'(eta)^2 / V(mu), stopping
    when the maximum absolute coordinate change between successive iterates
    falls below ``tol``.  The identity link reduces to ``ols_fit`` on the
    first iteration.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    mean, dmean, varf = _link_funcs(link)

    if link == "logit" and (np.any(y < 0) or np.any(y > 1)):
        raise ValueError("logit link needs outcomes in [0, 1]")
    if link == "log" and np.any(y < 0):
        raise ValueError("log link needs nonnegative outcomes")

    beta = np.zeros(X.shape[1])
    if link == "log":
        # Start from the mean response so the first eta is finite.
        beta[0] = np.log(max(np.mean(y), 1e-8))
    trace = []
    converged = False
    for _ in range(max_iter):
        eta = X @ beta
        mu = mean(eta)
        dm = dmean(eta)
        if np.any(dm < 1e-12):
            raise ConvergenceError(
                "working weights collapsed (possible separation or an "
                "unbounded iterate); the additive representation is undefined"
            )
        w = dm * dm / varf(mu)
        z = eta + (y - mu) / dm
        root = np.sqrt(w)
        new_beta = _qr_weight_rows(X * root[:, None]) @ (z * root)
        trace.append(new_beta)
        if len(trace) > 1 and np.max(np.abs(trace[-1] - trace[-2])) < tol:
            beta = new_beta
            converged = True
            break
        beta = new_beta
    if not converged:
        if link == "identity" and len(trace) == 1:
            converged = True  # a single weighted solve is already exact
        else:
            raise ConvergenceError(f"no convergence after {max_iter} iterations")

    eta = X @ beta
    mu = mean(eta)
    dm = dmean(eta)
    # Additive representation at the final iterate: rows of
    # (d'V^{-1}d)^{-1} d'V^{-1} with d = diag(mu') X and V = diag(V(mu)).
    ratio = dm / varf(mu)
    root = np.sqrt(dm * ratio)
    W = _qr_weight_rows(X * root[:, None]) * np.sqrt(ratio / dm)[None, :]
    return IRWLSFit(
        design=X,
        outcomes=y,
        link=link,
        coefficients=beta,
        weight_rows=W,
        fitted=mu,
        residuals=y - mu,
        trace=tuple(trace),
        n_iter=len(trace),
        converged=True,
    )


# ---------------------------------------------------------------------------
# conventional comparator: exchangeable-correlation sandwich
# ---------------------------------------------------------------------------


def gee_exchangeable_vcov(X, y, partition):
    """Sandwich covariance with an exchangeable working correlation.

    The working correlation rho is estimated by moment matching: the mean of
    within-cluster residual cross-products over all within-cluster pairs,
    normalized by the residual variance (no degrees-of-freedom correction).
    Working covariance scalars cancel between bread and meat, leaving

        vcov = D^{-1} (sum_k u_k u_k') D^{-1},
        D   = X'X - sum_k c_k Sx_k Sx_k',
        u_k = X_k' e_k - c_k Sx_k Se_k,
        c_k = rho / (1 + (n_k - 1) rho),

    with Sx_k, Se_k the within-cluster sums.  An all-singleton partition
    gives rho = 0 and reduces to the heteroskedasticity-robust sandwich.

    Returns (coefficients, vcov, rho_hat).
    """
    fit = ols_fit(X, y)
    X = fit.design
    e = fit.residuals
    n, p = X.shape
    if partition.assignment.shape[0] != n:
        raise ValueError("partition length does not match the data")
    if partition.n_clusters < 2:
        raise ValueError("need at least two clusters for a sandwich estimate")

    labels = partition.assignment - 1
    K = partition.n_clusters
    sizes = partition.cluster_sizes.astype(float)

    sigma2 = float(np.mean(e * e))
    Se = np.bincount(labels, weights=e, minlength=K)
    # sum over within-cluster pairs i<j of e_i e_j, via (sum^2 - sum of squares)/2
    Se2 = np.bincount(labels, weights=e * e, minlength=K)
    cross = 0.5 * float(np.sum(Se * Se - Se2))
    n_pairs = float(np.sum(sizes * (sizes - 1.0) / 2.0))
    if n_pairs > 0 and sigma2 > 0:
        rho = cross / (n_pairs * sigma2)
    else:
        rho = 0.0
    # Keep the working covariance positive definite for every cluster size.
    max_size = float(np.max(sizes))
    lo = -1.0 / (max_size - 1.0) + 1e-6 if max_size > 1 else -1.0 + 1e-6
    rho = float(np.clip(rho, lo, 1.0 - 1e-6))

    c = rho / (1.0 + (sizes - 1.0) * rho)
    Sx = np.zeros((K, p))
    for j in range(p):
        Sx[:, j] = np.bincount(labels, weights=X[:, j], minlength=K)
    D = X.T @ X - (Sx * c[:, None]).T @ Sx

    U = np.zeros((K, p))
    for j in range(p):
        U[:, j] = np.bincount(labels, weights=X[:, j] * e, minlength=K)
    U -= (c * Se)[:, None] * Sx
    meat = U.T @ U

    Dinv = np.linalg.inv(D)
    return fit.coefficients, Dinv @ meat @ Dinv, rho


def gee_exchangeable_wald(X, y, partition, alpha=0.05, s=0):
    """Wald confidence set for coefficient s from the exchangeable sandwich."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    coef, vcov, _ = gee_exchangeable_vcov(X, y, partition)
    se = float(np.sqrt(vcov[s, s]))
    z = std_normal_quantile(1.0 - alpha / 2.0)
    return ConfidenceSet(
        lower=float(coef[s]) - z * se,
        upper=float(coef[s]) + z * se,
        level=1.0 - alpha,
        method="wald",
        range_source=None,
    )


# ---------------------------------------------------------------------------
# autocorrelation-based dependence summary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ACFReport:
    """Sample autocorrelations r_1..r_L and their simple mean phi_hat."""

    acf: np.ndarray
    phi_hat: float
    lags: int


def acf_phi_hat(series, lags):
    """Sample autocorrelations of a series and their unweighted mean.

    r_l = sum_{t<=n-l} (y_t - ybar)(y_{t+l} - ybar) / sum_t (y_t - ybar)^2,
    the standard biased-normalization estimator.  phi_hat averages r_1..r_L
    with equal weight; callers compare several lag windows rather than
    trusting one.
    """
    y = np.asarray(series, dtype=float).ravel()
    n = y.shape[0]
    lags = int(lags)
    if not 1 <= lags < n:
        raise ValueError("lags must satisfy 1 <= lags < n")
    centered = y - np.mean(y)
    denom = float(np.sum(centered * centered))
    if denom == 0.0:
        raise ValueError("series is constant; autocorrelation is undefined")
    acf = np.array(
        [float(np.sum(centered[: n - l] * centered[l:])) / denom for l in range(1, lags + 1)]
    )
    return ACFReport(acf=acf, phi_hat=float(np.mean(acf)), lags=lags)
