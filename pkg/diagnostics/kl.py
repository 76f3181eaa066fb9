"""Kullback-Leibler divergence between densities tabulated on the same grid."""

import logging

import numpy as np

from copula.density import CopulaPosterior
from core.errors import DimensionError
from core.samples import WeightedSampleSet
from diagnostics.grid import GridDensity2D, GridSpec, grid_integral
from diagnostics.kde2d import copula_bivariate_grid, kde2d_sample

logger = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-300
ALT_DENSITY_FLOOR = 1e-12


def kl_grid(p: GridDensity2D, q: GridDensity2D, floor: float = DENSITY_FLOOR) -> float:
    """Trapezoidal ∫∫ p log(p / max(q, floor)), clipped below at 0."""
    if not p.same_grid(q):
        raise DimensionError("KL divergence needs both densities on the same grid")
    pv = p.values
    qv = np.maximum(q.values, floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(pv > 0, pv * (np.log(np.maximum(pv, floor)) - np.log(qv)), 0.0)
    return max(0.0, grid_integral(p.x, p.y, integrand))


def copula_grid_kl_diagnostic(
    post: CopulaPosterior, sample: WeightedSampleSet, pair: tuple[int, int], grid: GridSpec
) -> float:
    """KL(pairwise ABC KDE ‖ bivariate copula) for one pair; small values mean the copula fits that margin."""
    if sample.p != 2:
        raise DimensionError(f"pairwise sample must have 2 parameter columns, got {sample.p}")
    kl = kl_grid(kde2d_sample(sample, grid), copula_bivariate_grid(post, pair, grid))
    logger.info("Copula vs pairwise KDE for margins %s: KL=%.4g", tuple(pair), kl)
    return kl
