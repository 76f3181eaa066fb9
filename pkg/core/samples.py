"""
Weighted sample sets, summary maps and the uniform-kernel threshold.

WeightedSampleSet is the currency passed between pipeline stages:
parameter draws, their summary statistics and normalized weights.
"""

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from core.errors import DimensionError, NumericalError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class WeightedSampleSet:
    params: np.ndarray
    summaries: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        params = np.atleast_2d(np.asarray(self.params, dtype=float))
        if params.shape[0] == 1 and np.ndim(self.params) == 1:
            params = params.T
        summaries = np.asarray(self.summaries, dtype=float)
        if summaries.ndim == 1:
            summaries = summaries.reshape(-1, 1) if summaries.size else np.empty((params.shape[0], 0))
        weights = np.asarray(self.weights, dtype=float).ravel()

        n = params.shape[0]
        if summaries.shape[0] != n or weights.shape[0] != n:
            raise DimensionError(
                f"row counts disagree: params {n}, summaries {summaries.shape[0]}, weights {weights.shape[0]}"
            )
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise NumericalError("weights must be finite and nonnegative")
        total = weights.sum()
        if not total > 0:
            raise NumericalError("weights sum to zero")

        object.__setattr__(self, "params", _frozen(params))
        object.__setattr__(self, "summaries", _frozen(summaries))
        object.__setattr__(self, "weights", _frozen(weights / total))

    @classmethod
    def equally_weighted(cls, params: np.ndarray, summaries: np.ndarray | None = None) -> "WeightedSampleSet":
        params = np.asarray(params, dtype=float)
        n = params.shape[0]
        if summaries is None:
            summaries = np.empty((n, 0))
        return cls(params, summaries, np.ones(n))

    @property
    def n(self) -> int:
        return self.params.shape[0]

    @property
    def p(self) -> int:
        return self.params.shape[1]

    @property
    def q(self) -> int:
        return self.summaries.shape[1]

    def is_equally_weighted(self, rtol: float = 1e-9) -> bool:
        return bool(np.allclose(self.weights, 1.0 / self.n, rtol=rtol, atol=0.0))

    def take_params(self, columns: Sequence[int]) -> "WeightedSampleSet":
        """Same rows and weights, parameter columns restricted to `columns`."""
        return WeightedSampleSet(self.params[:, list(columns)], self.summaries, self.weights)

    def with_params(self, params: np.ndarray) -> "WeightedSampleSet":
        return WeightedSampleSet(params, self.summaries, self.weights)

    def weighted_mean(self) -> np.ndarray:
        return self.weights @ self.params


# ---------------------------------------------------------------------------
# Summary maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SummaryMap:
    """Informative summary indices (0-based) per parameter and parameter pair.

    Pairwise subsets default to the union of the two univariate subsets;
    explicit overrides may replace a pair's subset entirely.
    """

    univariate: tuple[tuple[int, ...], ...]
    pairwise: Mapping[tuple[int, int], tuple[int, ...]] = field(default_factory=dict)
    overridden: frozenset = frozenset()

    @classmethod
    def from_univariate(
        cls,
        univariate: Sequence[Sequence[int]],
        overrides: Mapping[tuple[int, int], Sequence[int]] | None = None,
    ) -> "SummaryMap":
        uni = tuple(tuple(sorted(set(int(k) for k in s))) for s in univariate)
        overrides = {_pair_key(*key): tuple(sorted(set(v))) for key, v in (overrides or {}).items()}
        pairwise = {}
        for i, j in combinations(range(len(uni)), 2):
            pairwise[(i, j)] = overrides.get((i, j), tuple(sorted(set(uni[i]) | set(uni[j]))))
        smap = cls(uni, pairwise, frozenset(overrides))
        smap.validate()
        return smap

    @property
    def p(self) -> int:
        return len(self.univariate)

    def pair(self, i: int, j: int) -> tuple[int, ...]:
        return self.pairwise[_pair_key(i, j)]

    def all_indices(self) -> tuple[int, ...]:
        """Union of every univariate subset (the standard-ABC summary vector)."""
        return tuple(sorted(set().union(*map(set, self.univariate))))

    def validate(self, q: int | None = None) -> None:
        for i, subset in enumerate(self.univariate):
            if not subset:
                raise DimensionError(f"summary map entry for parameter {i + 1} is empty")
        for i, j in combinations(range(self.p), 2):
            if (i, j) not in self.pairwise:
                raise DimensionError(f"summary map has no entry for pair ({i + 1}, {j + 1})")
            subset = self.pairwise[(i, j)]
            if not subset:
                raise DimensionError(f"summary map entry for pair ({i + 1}, {j + 1}) is empty")
            if (i, j) not in self.overridden:
                expected = set(self.univariate[i]) | set(self.univariate[j])
                if not expected <= set(subset):
                    raise DimensionError(f"pair ({i + 1}, {j + 1}) subset does not contain the univariate subsets")
        if q is not None:
            used = set(self.all_indices()).union(*map(set, self.pairwise.values())) if self.pairwise else set(self.all_indices())
            bad = [k for k in used if k < 0 or k >= q]
            if bad:
                raise DimensionError(f"summary indices {sorted(bad)} out of range for q={q}")


def _pair_key(i: int, j: int) -> tuple[int, int]:
    i, j = int(i), int(j)
    if i == j:
        raise DimensionError(f"pair needs two distinct parameters, got ({i + 1}, {j + 1})")
    return (i, j) if i < j else (j, i)


# ---------------------------------------------------------------------------
# Order statistics and the uniform kernel
# ---------------------------------------------------------------------------

def order_statistic_rank(prob: float, n: int) -> int:
    """k = ceil(prob * n), the rank used by every empirical quantile here."""
    # 1e-9 keeps products like 0.01 * 1e6 from rounding up to k + 1
    return min(n, max(1, math.ceil(prob * n - 1e-9)))


def empirical_quantile(values: np.ndarray, prob: float) -> float:
    """k-th smallest value with k = ceil(prob * n)."""
    values = np.asarray(values, dtype=float).ravel()
    k = order_statistic_rank(prob, values.size)
    return float(np.partition(values, k - 1)[k - 1])


def uniform_kernel_threshold(distances: np.ndarray, acceptance_quantile: float) -> float:
    """Bandwidth h of the uniform kernel: the ceil(quantile * N)-th smallest distance."""
    distances = np.asarray(distances, dtype=float).ravel()
    if distances.size == 0:
        raise DimensionError("no distances to threshold")
    if not 0.0 < acceptance_quantile <= 1.0:
        raise DimensionError(f"acceptance quantile must lie in (0, 1], got {acceptance_quantile}")
    if np.any(distances < 0) or np.any(np.isnan(distances)):
        raise NumericalError("distances must be nonnegative")
    return empirical_quantile(distances, acceptance_quantile)
