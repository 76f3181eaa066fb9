"""
Latent Gaussian copula over binary inclusion indicators.

γ_i = 1 exactly when Z_i > t_i, with Z ~ N(0, Λ) and t_i = Φ⁻¹(p_i),
p_i = P(γ_i = 0 | s_(i)). Marginal frequencies come from the n_keep rows
nearest on s_(i); joint frequencies P(γ_i = 1, γ_j = 1) from the n_keep
rows nearest on s_(i,j). Each Λ_ij is then the orthant-probability root.
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import ndtri

from abc_engine.reference_table import ReferenceTable
from abc_engine.selection import abc_nearest
from copula.correlation import EIGENVALUE_FLOOR, RepairLog, assemble_correlation
from core.distance import DistanceSpec
from core.errors import DimensionError, NumericalError
from core.parallel import parallel_map
from core.samples import SummaryMap
from discrete_copula.orthant import solve_lambda

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiscreteCopulaPosterior:
    probs: np.ndarray          # p_i = P(γ_i = 0)
    lambda_: np.ndarray
    repair: RepairLog = field(default_factory=lambda: RepairLog(False, EIGENVALUE_FLOOR, 1.0, 0.0))
    n_keep: int = 0
    clamped_pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float).ravel()
        lam = np.array(self.lambda_, dtype=float)
        if lam.shape != (probs.size, probs.size):
            raise DimensionError(f"latent correlation is {lam.shape}, expected ({probs.size}, {probs.size})")
        if np.any(probs <= 0.0) or np.any(probs >= 1.0):
            raise NumericalError("indicator probabilities must lie strictly inside (0, 1)")
        try:
            chol = np.linalg.cholesky(lam)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("latent correlation matrix is not positive definite") from exc
        probs.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "lambda_", lam)
        object.__setattr__(self, "_chol", chol)

    @property
    def p(self) -> int:
        return self.probs.size

    @property
    def thresholds(self) -> np.ndarray:
        return ndtri(self.probs)

    def inclusion_probabilities(self) -> np.ndarray:
        return 1.0 - self.probs


def clamp_frequency(freq: float, n_keep: int) -> float:
    """Keep a frequency a half-count away from 0 and 1."""
    half = 1.0 / (2 * n_keep)
    return float(np.clip(freq, half, 1.0 - half))


def _check_binary(table: ReferenceTable) -> None:
    if not np.all(np.isin(table.params, (0.0, 1.0))):
        raise DimensionError("discrete copula needs parameter columns in {0, 1}")


def fit_discrete_copula(
    table: ReferenceTable,
    s_obs: np.ndarray,
    smap: SummaryMap,
    n_keep: int,
    spec: DistanceSpec | None = None,
    threads: int = 1,
) -> DiscreteCopulaPosterior:
    _check_binary(table)
    if smap.p != table.p:
        raise DimensionError(f"summary map covers {smap.p} parameters, table has p={table.p}")
    smap.validate(table.q)
    spec = spec or DistanceSpec.euclidean()

    def marginal(i: int) -> float:
        kept = abc_nearest(table, s_obs, smap.univariate[i], n_keep, spec)
        return clamp_frequency(float(np.mean(kept.params[:, i] == 0.0)), n_keep)

    probs = np.array(parallel_map(marginal, range(table.p), threads))
    pairs = list(combinations(range(table.p), 2))

    def pairwise(pair: tuple[int, int]) -> tuple[float, bool]:
        i, j = pair
        kept = abc_nearest(table, s_obs, smap.pair(i, j), n_keep, spec)
        joint11 = float(np.mean((kept.params[:, i] == 1.0) & (kept.params[:, j] == 1.0)))
        return solve_lambda(probs[i], probs[j], joint11)

    solved = parallel_map(pairwise, pairs, threads)
    lam, repair = assemble_correlation({pair: rho for pair, (rho, _) in zip(pairs, solved)}, table.p)
    clamped = tuple(pair for pair, (_, flag) in zip(pairs, solved) if flag)
    if clamped:
        logger.warning("%d pair(s) had joint frequencies outside the attainable range", len(clamped))
    logger.info("Fitted discrete copula over %d indicator(s) with n_keep=%d", table.p, n_keep)
    return DiscreteCopulaPosterior(probs, lam, repair, n_keep, clamped)
