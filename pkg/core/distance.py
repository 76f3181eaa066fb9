"""
Distances between summary-statistic vectors.

Euclidean for the toy and variable-selection runs, Mahalanobis with a
pilot covariance Σ₀ for the g-and-k runs.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from core.errors import DimensionError, NumericalError
from core.rng import SeededRng

logger = logging.getLogger(__name__)

EUCLIDEAN = "euclidean"
MAHALANOBIS = "mahalanobis"


@dataclass(frozen=True)
class DistanceSpec:
    kind: str = EUCLIDEAN
    scale: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (EUCLIDEAN, MAHALANOBIS):
            raise DimensionError(f"unknown distance kind {self.kind!r}")
        if self.kind == EUCLIDEAN:
            if self.scale is not None:
                raise DimensionError("euclidean distance takes no scale matrix")
            return
        if self.scale is None:
            raise DimensionError("mahalanobis distance needs a scale matrix")
        scale = np.array(self.scale, dtype=float)
        if scale.ndim != 2 or scale.shape[0] != scale.shape[1]:
            raise DimensionError(f"scale must be square, got shape {scale.shape}")
        if not np.allclose(scale, scale.T, rtol=1e-10, atol=1e-12):
            raise NumericalError("scale matrix is not symmetric")
        try:
            chol = linalg.cholesky(scale, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError("scale matrix is not positive definite") from exc
        scale.setflags(write=False)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "_chol", chol)

    @classmethod
    def euclidean(cls) -> "DistanceSpec":
        return cls(EUCLIDEAN)

    @classmethod
    def mahalanobis(cls, scale: np.ndarray) -> "DistanceSpec":
        return cls(MAHALANOBIS, scale)

    def project(self, subset: Sequence[int]) -> "DistanceSpec":
        """Spec for the summaries restricted to `subset` (marginal covariance block)."""
        if self.kind == EUCLIDEAN:
            return self
        idx = list(subset)
        return DistanceSpec(MAHALANOBIS, self.scale[np.ix_(idx, idx)])


def distances(summaries: np.ndarray, s_obs: np.ndarray, spec: DistanceSpec) -> np.ndarray:
    """Row-wise distance of every summary vector to `s_obs`."""
    summaries = np.atleast_2d(np.asarray(summaries, dtype=float))
    s_obs = np.asarray(s_obs, dtype=float).ravel()
    if summaries.shape[1] != s_obs.size:
        raise DimensionError(f"summary length {summaries.shape[1]} does not match observed length {s_obs.size}")
    diff = summaries - s_obs
    if spec.kind == EUCLIDEAN:
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if spec.scale.shape[0] != s_obs.size:
        raise DimensionError(f"scale is {spec.scale.shape[0]}x{spec.scale.shape[0]} but summaries have length {s_obs.size}")
    whitened = linalg.solve_triangular(spec._chol, diff.T, lower=True)
    return np.sqrt(np.einsum("ij,ij->j", whitened, whitened))


def distance(a: np.ndarray, b: np.ndarray, spec: DistanceSpec) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise DimensionError(f"vectors of length {a.size} and {b.size}")
    return float(distances(a[None, :], b, spec)[0])


def estimate_mahalanobis_scale(
    simulate: Callable[[np.ndarray, np.random.Generator], np.ndarray],
    theta0: np.ndarray,
    m: int,
    rng: SeededRng,
) -> np.ndarray:
    """Sample covariance Σ₀ of `m` summaries simulated at θ₀, ridged if singular.

    The ridge is ε·I with ε = 1e-8 × mean diagonal (a zero mean diagonal
    counts as 1 so that constant simulators still yield a usable matrix).
    """
    gen = rng.generator()
    first = np.asarray(simulate(theta0, gen), dtype=float).ravel()
    q = first.size
    if m < q + 1:
        raise DimensionError(f"need at least q+1={q + 1} simulations for a {q}x{q} covariance, got {m}")

    draws = np.empty((m, q))
    draws[0] = first
    for r in range(1, m):
        draws[r] = np.asarray(simulate(theta0, gen), dtype=float).ravel()

    cov = np.atleast_2d(np.cov(draws, rowvar=False))
    cov = 0.5 * (cov + cov.T)
    mean_diag = float(np.mean(np.diag(cov)))
    eps = 1e-8 * (mean_diag if mean_diag > 0 else 1.0)
    try:
        linalg.cholesky(cov, lower=True)
        if np.linalg.eigvalsh(cov)[0] > eps:
            return cov
    except linalg.LinAlgError:
        pass
    logger.warning("Pilot covariance is singular; adding ridge %.3g", eps)
    return cov + eps * np.eye(q)
