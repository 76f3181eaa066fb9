"""
Copula ABC fit from one shared reference table.

Step 2 (marginals): for every parameter i, select on s_(i), optionally
regression-adjust, and build a MarginalEstimate.
Step 1 (pairs): for every pair (i, j), select on s_(i,j), optionally
regression-adjust, marginally adjust the two columns to the Step-2
marginals, and take the normal-scores correlation.
Step 3: assemble the pairwise values into a repaired correlation matrix.

Marginal and pairwise fits are independent and run through parallel_map.
"""

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from abc_engine.reference_table import ReferenceTable
from abc_engine.selection import abc_select
from adjustments.marginal import marginal_adjust
from adjustments.regression import regression_adjust
from copula.correlation import assemble_correlation, pairwise_lambda
from copula.density import CopulaPosterior
from copula.marginals import MarginalEstimate
from core.distance import DistanceSpec
from core.errors import DimensionError
from core.parallel import parallel_map
from core.samples import SummaryMap, WeightedSampleSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdjustFlags:
    regression: bool = True
    marginal: bool = True
    # pairwise correlations from raw ABC output, no adjustment at all
    literal_pairs: bool = False


def _check_inputs(table: ReferenceTable, s_obs: np.ndarray, smap: SummaryMap) -> np.ndarray:
    s_obs = np.asarray(s_obs, dtype=float).ravel()
    if s_obs.size != table.q:
        raise DimensionError(f"observed summaries have length {s_obs.size}, table has q={table.q}")
    if smap.p != table.p:
        raise DimensionError(f"summary map covers {smap.p} parameters, table has p={table.p}")
    smap.validate(table.q)
    return s_obs


def marginal_sample(
    table: ReferenceTable,
    s_obs: np.ndarray,
    smap: SummaryMap,
    i: int,
    quantile: float,
    spec: DistanceSpec,
    regression: bool = True,
) -> WeightedSampleSet:
    subset = smap.univariate[i]
    sel = abc_select(table, s_obs, subset, quantile, spec).take_params([i])
    if regression:
        sel = regression_adjust(sel, s_obs, subset)
    return sel


def fit_marginals(
    table: ReferenceTable,
    s_obs: np.ndarray,
    smap: SummaryMap,
    quantile: float,
    spec: DistanceSpec | None = None,
    regression: bool = True,
    indices: Sequence[int] | None = None,
    threads: int = 1,
) -> list[MarginalEstimate]:
    """Step 2 alone: one MarginalEstimate per parameter in `indices` (default all)."""
    spec = spec or DistanceSpec.euclidean()
    s_obs = _check_inputs(table, s_obs, smap)
    indices = list(range(table.p)) if indices is None else [int(i) for i in indices]

    def run(i: int) -> MarginalEstimate:
        sel = marginal_sample(table, s_obs, smap, i, quantile, spec, regression)
        return MarginalEstimate.from_sample(sel.params[:, 0], sel.weights)

    marginals = parallel_map(run, indices, threads)
    logger.info("Fitted %d marginal estimate(s)", len(marginals))
    return marginals


def pair_sample(
    table: ReferenceTable,
    s_obs: np.ndarray,
    smap: SummaryMap,
    pair: tuple[int, int],
    quantile: float,
    spec: DistanceSpec,
    marginals: Sequence[MarginalEstimate] | None = None,
    flags: AdjustFlags = AdjustFlags(),
) -> WeightedSampleSet:
    """Adjusted bivariate ABC sample for (θ_i, θ_j) conditioned on s_(i,j)."""
    i, j = pair
    subset = smap.pair(i, j)
    sel = abc_select(table, s_obs, subset, quantile, spec).take_params([i, j])
    if flags.literal_pairs:
        return sel
    if flags.regression:
        sel = regression_adjust(sel, s_obs, subset)
    if flags.marginal and marginals is not None and sel.is_equally_weighted():
        sel = marginal_adjust(sel, marginals)
    return sel


def fit_copula(
    table: ReferenceTable,
    s_obs: np.ndarray,
    smap: SummaryMap,
    quantile: float,
    spec: DistanceSpec | None = None,
    flags: AdjustFlags = AdjustFlags(),
    indices: Sequence[int] | None = None,
    threads: int = 1,
) -> CopulaPosterior:
    """Gaussian copula approximation of π(θ | s_obs), optionally over a parameter subset."""
    spec = spec or DistanceSpec.euclidean()
    s_obs = _check_inputs(table, s_obs, smap)
    indices = list(range(table.p)) if indices is None else [int(i) for i in indices]
    if len(set(indices)) != len(indices):
        raise DimensionError(f"duplicate parameter indices {indices}")

    marginals = fit_marginals(table, s_obs, smap, quantile, spec, flags.regression, indices, threads)
    by_index = dict(zip(indices, marginals))

    positions = list(combinations(range(len(indices)), 2))

    def run(pos: tuple[int, int]) -> float:
        i, j = indices[pos[0]], indices[pos[1]]
        sample = pair_sample(table, s_obs, smap, (i, j), quantile, spec, [by_index[i], by_index[j]], flags)
        return pairwise_lambda(sample.params[:, 0], sample.params[:, 1])

    values = parallel_map(run, positions, threads)
    lam, repair = assemble_correlation(dict(zip(positions, values)), len(indices))
    logger.info("Fitted copula over %d parameter(s), %d pair(s); repair=%s", len(indices), len(positions), repair.repaired)
    return CopulaPosterior(tuple(marginals), lam, repair, tuple(indices))
