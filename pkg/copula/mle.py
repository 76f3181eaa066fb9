"""
Approximate maximum likelihood from a copula posterior.

For a parameter subset the copula marginal density g̃ divided by the
marginal prior is proportional to the (approximate) likelihood, so its
maximiser is an approximate marginal MLE. The objective is only
piecewise smooth (KDE marginals, interpolated CDFs), hence Nelder-Mead
with restarts.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from copula.density import CopulaPosterior, copula_log_density
from core.errors import DimensionError, NumericalError
from core.rng import SeededRng

logger = logging.getLogger(__name__)

N_RESTARTS = 5
START_QUANTILES = (0.25, 0.5, 0.75)
HESSIAN_STEP = 1e-4
_INFEASIBLE = 1e300


@dataclass(frozen=True)
class MleResult:
    indices: tuple[int, ...]
    estimate: np.ndarray
    se: np.ndarray
    log_likelihood: float
    converged: bool

    def interval(self, width: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
        """Estimate ± width·se, the crosshair drawn around an approximate MLE."""
        return self.estimate - width * self.se, self.estimate + width * self.se


def _objective(sub: CopulaPosterior, log_prior: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], float]:
    def log_lik(x: np.ndarray) -> float:
        lp = float(log_prior(x))
        if not np.isfinite(lp) or not np.all(np.isfinite(x)):
            return -np.inf
        return float(copula_log_density(sub, x)) - lp
    return log_lik


def finite_difference_hessian(fn: Callable[[np.ndarray], float], x: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Central-difference Hessian of fn at x with per-coordinate steps."""
    d = x.size
    hess = np.empty((d, d))
    f0 = fn(x)
    for a in range(d):
        ea = np.zeros(d)
        ea[a] = steps[a]
        hess[a, a] = (fn(x + ea) - 2.0 * f0 + fn(x - ea)) / steps[a] ** 2
        for b in range(a + 1, d):
            eb = np.zeros(d)
            eb[b] = steps[b]
            val = (fn(x + ea + eb) - fn(x + ea - eb) - fn(x - ea + eb) + fn(x - ea - eb)) / (4.0 * steps[a] * steps[b])
            hess[a, b] = hess[b, a] = val
    return hess


def _standard_errors(log_lik, x: np.ndarray, steps: np.ndarray) -> np.ndarray:
    hess = finite_difference_hessian(log_lik, x, steps)
    if not np.all(np.isfinite(hess)):
        return np.full(x.size, np.nan)
    try:
        cov = np.linalg.inv(-hess)
    except np.linalg.LinAlgError:
        return np.full(x.size, np.nan)
    diag = np.diag(cov)
    return np.where(diag > 0, np.sqrt(np.abs(diag)), np.nan)


def approx_mle(
    post: CopulaPosterior,
    log_prior: Callable[[np.ndarray], float],
    subset: Sequence[int],
    rng: SeededRng | None = None,
    restarts: int = N_RESTARTS,
) -> MleResult:
    """Maximise log g̃_subset(x) - log p_subset(x) over the margins at `subset`.

    `log_prior` takes the subset coordinates only and returns -inf outside
    the prior support.
    """
    subset = [int(k) for k in subset]
    if not subset:
        raise DimensionError("approximate MLE needs a nonempty parameter subset")
    if len(subset) > 2:
        logger.warning("Approximate MLE over %d parameters; 1 or 2 is recommended", len(subset))
    sub = post.marginalize(subset)
    log_lik = _objective(sub, log_prior)

    def neg(x: np.ndarray) -> float:
        val = log_lik(x)
        return -val if np.isfinite(val) else _INFEASIBLE

    gen = (rng or SeededRng(0, ("mle",))).generator()
    grid = np.array([[float(m.quantile(u)) for u in START_QUANTILES] for m in sub.marginals])
    starts = [grid[:, 1]]
    for _ in range(max(restarts, 1) - 1):
        starts.append(grid[np.arange(sub.p), gen.integers(0, len(START_QUANTILES), size=sub.p)])

    best = None
    any_converged = False
    for x0 in starts:
        res = optimize.minimize(neg, x0, method="Nelder-Mead", options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
        if res.fun >= _INFEASIBLE:
            continue
        any_converged |= bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise NumericalError("approximate MLE: every start is outside the prior support")
    if not any_converged:
        logger.warning("Approximate MLE did not converge after %d start(s); reporting best point", len(starts))

    iqr = np.array([m.iqr() for m in sub.marginals])
    steps = HESSIAN_STEP * np.where(iqr > 0, iqr, 1.0)
    se = _standard_errors(log_lik, best.x, steps)
    if np.any(np.isnan(se)):
        logger.warning("Approximate MLE: Hessian not negative definite at the optimum, standard errors unavailable")
    return MleResult(tuple(sub.indices), np.asarray(best.x, dtype=float), se, float(-best.fun), any_converged)
