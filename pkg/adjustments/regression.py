"""
Local-linear regression adjustment.

Each parameter column is regressed by weighted least squares on the
centred summaries s - s_obs; the adjusted draws are
θ* = θ - β̂ᵀ(s - s_obs). Collinear summaries are dropped through a
column-pivoted QR factorization so the kept coefficients stay
interpretable.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from core.errors import DimensionError
from core.samples import WeightedSampleSet

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10


@dataclass(frozen=True)
class RegressionFit:
    intercept: np.ndarray      # (p,)
    coefficients: np.ndarray   # (|subset|, p)
    residuals: np.ndarray      # (n, p)
    dropped: tuple[int, ...]   # summary indices removed as collinear


def fit_regression(samples: WeightedSampleSet, s_obs: np.ndarray, subset: Sequence[int]) -> RegressionFit:
    idx = [int(k) for k in subset]
    if not idx:
        raise DimensionError("regression needs at least one summary statistic")
    s_obs = np.asarray(s_obs, dtype=float).ravel()
    n, m = samples.n, len(idx)
    if n <= m + 1:
        raise DimensionError(f"regression on {m} summaries needs more than {m + 1} samples, got {n}")

    w = samples.weights
    X = samples.summaries[:, idx] - s_obs[idx]
    theta = samples.params

    # intercept handled by weighted centring, so pivoting only touches summaries
    x_bar = w @ X
    t_bar = w @ theta
    sw = np.sqrt(w)[:, None]
    Xc = sw * (X - x_bar)
    Tc = sw * (theta - t_bar)

    Q, R, piv = linalg.qr(Xc, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOL * max(diag[0], 1e-300))) if diag.size else 0

    beta = np.zeros((m, samples.p))
    if rank > 0:
        coef = linalg.solve_triangular(R[:rank, :rank], Q[:, :rank].T @ Tc)
        beta[piv[:rank]] = coef
    dropped = tuple(idx[k] for k in sorted(piv[rank:]))
    if dropped:
        logger.warning("Regression adjustment dropped collinear summaries %s", list(dropped))

    alpha = t_bar - x_bar @ beta
    residuals = theta - alpha - X @ beta
    return RegressionFit(alpha, beta, residuals, dropped)


def regression_adjust(samples: WeightedSampleSet, s_obs: np.ndarray, subset: Sequence[int]) -> WeightedSampleSet:
    """Replace params with θ - β̂ᵀ(s - s_obs); summaries and weights unchanged."""
    fit = fit_regression(samples, s_obs, subset)
    s_obs = np.asarray(s_obs, dtype=float).ravel()
    idx = [int(k) for k in subset]
    X = samples.summaries[:, idx] - s_obs[idx]
    return samples.with_params(samples.params - X @ fit.coefficients)
