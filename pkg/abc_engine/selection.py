"""
ABC selection from a reference table.

abc_select applies the uniform kernel on a chosen summary subset and
returns the accepted rows weighted by their importance ratios.
abc_nearest keeps a fixed number of closest rows (discrete models).
"""

import logging
from typing import Sequence

import numpy as np

from abc_engine.reference_table import ReferenceTable
from core.distance import DistanceSpec, distances
from core.errors import DimensionError, NumericalError
from core.samples import WeightedSampleSet, uniform_kernel_threshold

logger = logging.getLogger(__name__)


def _check_subset(subset: Sequence[int], q: int) -> list[int]:
    idx = [int(k) for k in subset]
    if not idx:
        raise DimensionError("summary subset is empty")
    bad = [k for k in idx if k < 0 or k >= q]
    if bad:
        raise DimensionError(f"summary indices {bad} out of range for q={q}")
    return idx


def subset_distances(
    table: ReferenceTable, s_obs: np.ndarray, subset: Sequence[int], spec: DistanceSpec
) -> np.ndarray:
    """Distances of table rows to s_obs on the projected summaries table[:, subset]."""
    idx = _check_subset(subset, table.q)
    s_obs = np.asarray(s_obs, dtype=float).ravel()
    if s_obs.size != table.q:
        raise DimensionError(f"observed summaries have length {s_obs.size}, table has q={table.q}")
    local = spec.project(idx) if spec.scale is not None and spec.scale.shape[0] == table.q else spec
    return distances(table.summaries[:, idx], s_obs[idx], local)


def abc_select(
    table: ReferenceTable,
    s_obs: np.ndarray,
    subset: Sequence[int],
    quantile: float,
    spec: DistanceSpec | None = None,
) -> WeightedSampleSet:
    """Rows with d <= h, h the `quantile` order statistic of the distances; ties at h are all kept."""
    spec = spec or DistanceSpec.euclidean()
    d = subset_distances(table, s_obs, subset, spec)
    if not np.any(np.isfinite(d)):
        raise NumericalError("every distance is infinite")
    h = uniform_kernel_threshold(np.where(np.isfinite(d), d, np.inf), quantile)
    keep = np.flatnonzero(d <= h)
    logger.debug("abc_select: subset %s, h=%.6g, %d of %d rows kept", list(subset), h, keep.size, table.n)
    return WeightedSampleSet(table.params[keep], table.summaries[keep], table.ratios[keep])


def abc_nearest(
    table: ReferenceTable,
    s_obs: np.ndarray,
    subset: Sequence[int],
    n_keep: int,
    spec: DistanceSpec | None = None,
) -> WeightedSampleSet:
    """Exactly `n_keep` closest rows; ties resolved by table order."""
    if not 1 <= n_keep <= table.n:
        raise DimensionError(f"n_keep must lie in [1, {table.n}], got {n_keep}")
    d = subset_distances(table, s_obs, subset, spec or DistanceSpec.euclidean())
    keep = np.sort(np.argsort(d, kind="stable")[:n_keep])
    return WeightedSampleSet(table.params[keep], table.summaries[keep], table.ratios[keep])
