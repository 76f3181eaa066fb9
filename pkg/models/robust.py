"""
Huber M-estimation t-statistics.

robust_t_statistics fits one dataset with statsmodels RLM (HuberT norm,
MAD scale about zero, deviance convergence, H1 covariance).
huber_t_statistics_batch runs the same IRLS iteration vectorized over
many responses sharing one design, for reference-table simulation; the
two agree to the IRLS tolerance. Both fit y divided by response_scale, so
the absolute deviance tolerance stops at the same iterate whatever the
units of y.

If IRLS has not converged after MAX_ITER iterations the least-squares
t-statistics are returned instead and a warning is logged.
"""

import logging
import warnings

import numpy as np
import statsmodels.api as sm
from scipy.special import ndtri
from statsmodels.tools.sm_exceptions import ConvergenceWarning

from core.errors import DimensionError

logger = logging.getLogger(__name__)

HUBER_T = 1.345
MAX_ITER = 50
TOL = 1e-8
_MAD_CONST = float(ndtri(0.75))


def check_design(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] <= X.shape[1]:
        raise DimensionError(f"design of shape {X.shape} needs more rows than columns")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DimensionError("design matrix is rank deficient (duplicate or collinear columns)")
    return X


def response_scale(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Positive per-row scale of Y: MAD of the least-squares residuals, else the sd, else 1."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    resid = Y - Y @ X @ np.linalg.pinv(X)
    scale = _mad(resid)
    sd = Y.std(axis=1)
    scale = np.where(scale > 0, scale, sd)
    return np.where(scale > 0, scale, 1.0)


def ols_t_statistics(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Least-squares t-statistics for each row of Y (shape (m, n) or (n,))."""
    X = check_design(X)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n, d = X.shape
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = Y @ X @ xtx_inv
    resid = Y - beta @ X.T
    sigma2 = np.sum(resid ** 2, axis=1) / (n - d)
    se = np.sqrt(sigma2[:, None] * np.diag(xtx_inv)[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        return beta / se


# ---------------------------------------------------------------------------
# Single fit via statsmodels
# ---------------------------------------------------------------------------

def robust_t_statistics(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Huber RLM t-statistics of every column of X (falls back to OLS on non-convergence)."""
    X = check_design(X)
    y = np.asarray(y, dtype=float).ravel()
    # the deviance tolerance is absolute, so fit on a unit-scale response
    y = y / response_scale(X, y)[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        res = sm.RLM(y, X, M=sm.robust.norms.HuberT(t=HUBER_T)).fit(
            maxiter=MAX_ITER, tol=TOL, scale_est="mad", cov="H1", conv="dev"
        )
    deviance = res.fit_history["deviance"]
    converged = res.fit_history["iteration"] < MAX_ITER or abs(deviance[-1] - deviance[-2]) <= TOL
    if not converged or not np.all(np.isfinite(res.tvalues)):
        logger.warning("Huber IRLS did not converge in %d iterations; using least-squares t-statistics", MAX_ITER)
        return ols_t_statistics(X, y)[0]
    return np.asarray(res.tvalues, dtype=float)


# ---------------------------------------------------------------------------
# Vectorized IRLS
# ---------------------------------------------------------------------------

def _huber_rho(z: np.ndarray) -> np.ndarray:
    a = np.abs(z)
    return np.where(a <= HUBER_T, 0.5 * z ** 2, HUBER_T * a - 0.5 * HUBER_T ** 2)


def _mad(resid: np.ndarray) -> np.ndarray:
    return np.median(np.abs(resid), axis=1) / _MAD_CONST


def _wls(X: np.ndarray, Y: np.ndarray, W: np.ndarray) -> np.ndarray:
    gram = np.einsum("mi,ij,ik->mjk", W, X, X)
    rhs = np.einsum("mi,ij,mi->mj", W, X, Y)
    return np.linalg.solve(gram, rhs[..., None])[..., 0]


def huber_t_statistics_batch(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Huber IRLS t-statistics for each row of Y, same iteration and covariance as RLM."""
    X = check_design(X)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Y = Y / response_scale(X, Y)[:, None]
    m, n = Y.shape
    d = X.shape[1]
    xtx_inv = np.linalg.inv(X.T @ X)

    beta = Y @ X @ xtx_inv
    resid = Y - beta @ X.T
    scale = _mad(resid)
    dev_prev = np.full(m, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = np.sum(_huber_rho(resid / scale[:, None]), axis=1)
    active = scale > 0
    iteration = 1

    while np.any(active) and iteration < MAX_ITER:
        rows = np.flatnonzero(active)
        z = resid[rows] / scale[rows, None]
        w = np.minimum(1.0, HUBER_T / np.maximum(np.abs(z), 1e-300))
        beta[rows] = _wls(X, Y[rows], w)
        resid[rows] = Y[rows] - beta[rows] @ X.T
        scale[rows] = _mad(resid[rows])
        dev_prev[rows] = dev[rows]
        with np.errstate(divide="ignore", invalid="ignore"):
            dev[rows] = np.sum(_huber_rho(resid[rows] / scale[rows, None]), axis=1)
        iteration += 1
        active[rows] = (np.abs(dev[rows] - dev_prev[rows]) > TOL) & (scale[rows] > 0)

    with np.errstate(divide="ignore", invalid="ignore"):
        sres = resid / scale[:, None]
        psi = np.clip(sres, -HUBER_T, HUBER_T)
        dpsi = (np.abs(sres) <= HUBER_T).astype(float)
        mean_d = dpsi.mean(axis=1)
        k = 1.0 + d / n * dpsi.var(axis=1) / mean_d ** 2
        factor = k ** 2 * (np.sum(psi ** 2, axis=1) / (n - d)) * scale ** 2 / mean_d ** 2
        tstat = beta / np.sqrt(factor[:, None] * np.diag(xtx_inv)[None, :])

    bad = active | ~np.all(np.isfinite(tstat), axis=1)
    if np.any(bad):
        logger.warning("Huber IRLS did not converge for %d of %d dataset(s); using least-squares t-statistics", int(bad.sum()), m)
        tstat[bad] = ols_t_statistics(X, Y[bad])
    return tstat


def robust_scale(X: np.ndarray, y: np.ndarray) -> float:
    """MAD residual scale of the Huber fit of y on X."""
    X = check_design(X)
    y = np.asarray(y, dtype=float).ravel()
    unit = response_scale(X, y)[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        res = sm.RLM(y / unit, X, M=sm.robust.norms.HuberT(t=HUBER_T)).fit(
            maxiter=MAX_ITER, tol=TOL, scale_est="mad", cov="H1", conv="dev"
        )
    return float(res.scale * unit)
