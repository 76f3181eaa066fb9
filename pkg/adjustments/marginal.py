"""
Marginal adjustment: replace each column's order statistics with the
quantiles of a more precise univariate marginal estimate.

The entry of rank r (ties broken by input order) becomes the
(r/(n+1))-quantile of the marginal, so ranks within every column are
preserved and only the marginal scale changes.
"""

from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from core.errors import DimensionError
from core.samples import WeightedSampleSet


def column_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n, ties broken by stable input order."""
    return rankdata(np.asarray(values, dtype=float).ravel(), method="ordinal").astype(int)


def marginal_adjust(joint: WeightedSampleSet, marginals: Sequence) -> WeightedSampleSet:
    """Rank-preserving substitution of each column by its marginal's quantiles."""
    if len(marginals) != joint.p:
        raise DimensionError(f"{len(marginals)} marginal estimates for {joint.p} parameters")
    if not joint.is_equally_weighted():
        raise DimensionError("marginal adjustment needs equally weighted samples")
    n = joint.n
    adjusted = np.empty_like(joint.params)
    for i, marginal in enumerate(marginals):
        ranks = column_ranks(joint.params[:, i])
        adjusted[:, i] = marginal.quantile(ranks / (n + 1))
    return joint.with_params(adjusted)
