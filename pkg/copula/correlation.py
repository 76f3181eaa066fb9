"""
Normal scores, pairwise copula correlations and correlation-matrix assembly.

Pairwise estimates assembled into a p×p matrix need not be positive
definite. Repair clips eigenvalues at EIGENVALUE_FLOOR, rebuilds the
matrix and rescales it to unit diagonal, repeating until the floor holds.
Every repair is logged so a sensitivity check can be run on it.
"""

import logging
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import ndtri

from adjustments.marginal import column_ranks
from core.errors import DimensionError, NumericalError

logger = logging.getLogger(__name__)

EIGENVALUE_FLOOR = 1e-6
MAX_REPAIR_ROUNDS = 100


@dataclass(frozen=True)
class RepairLog:
    repaired: bool
    eigenvalue_floor: float
    min_eigenvalue_before: float
    max_abs_change: float
    rounds: int = 0


def normal_scores(values: np.ndarray) -> np.ndarray:
    """Φ⁻¹(rank/(n+1)) per entry."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise DimensionError("normal scores of an empty sample")
    return ndtri(column_ranks(values) / (values.size + 1))


def pairwise_lambda(theta_i: np.ndarray, theta_j: np.ndarray) -> float:
    """Sample correlation of the two normal-scores vectors."""
    a = np.asarray(theta_i, dtype=float).ravel()
    b = np.asarray(theta_j, dtype=float).ravel()
    if a.size != b.size:
        raise DimensionError(f"columns of length {a.size} and {b.size}")
    if a.size < 3:
        raise DimensionError(f"pairwise correlation needs at least 3 draws, got {a.size}")
    za, zb = normal_scores(a), normal_scores(b)
    za -= za.mean()
    zb -= zb.mean()
    denom = np.sqrt((za @ za) * (zb @ zb))
    if not denom > 0:
        raise NumericalError("normal scores have zero variance")
    return float(np.clip((za @ zb) / denom, -1.0, 1.0))


def _unit_diagonal(mat: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diag(mat))
    out = mat / np.outer(d, d)
    np.fill_diagonal(out, 1.0)
    return 0.5 * (out + out.T)


def repair_correlation(mat: np.ndarray, floor: float = EIGENVALUE_FLOOR) -> tuple[np.ndarray, RepairLog]:
    """Nearest-by-eigenvalue-clipping correlation matrix with eigenvalues >= floor."""
    original = _unit_diagonal(np.asarray(mat, dtype=float))
    min_before = float(np.linalg.eigvalsh(original)[0])
    if min_before >= floor:
        return original, RepairLog(False, floor, min_before, 0.0, 0)

    current = original
    rounds = 0
    for rounds in range(1, MAX_REPAIR_ROUNDS + 1):
        vals, vecs = np.linalg.eigh(current)
        # a slightly raised target absorbs the shrink from diagonal rescaling
        clipped = (vecs * np.maximum(vals, floor * 1.01)) @ vecs.T
        current = _unit_diagonal(clipped)
        if np.linalg.eigvalsh(current)[0] >= floor:
            break
    else:
        t = 0.0
        while np.linalg.eigvalsh(current)[0] < floor and t < 1.0:
            t = min(1.0, t + 0.01)
            current = _unit_diagonal((1 - t) * current + t * np.eye(len(current)))

    change = float(np.max(np.abs(current - original)))
    logger.warning(
        "Correlation matrix repaired: min eigenvalue %.4g -> floor %.0e, max entry change %.4g",
        min_before, floor, change,
    )
    return current, RepairLog(True, floor, min_before, change, rounds)


def assemble_correlation(pairs: Mapping[tuple[int, int], float], p: int) -> tuple[np.ndarray, RepairLog]:
    """Unit-diagonal matrix from all p(p-1)/2 pairwise values, PD-repaired if needed."""
    mat = np.eye(p)
    for i in range(p):
        for j in range(i + 1, p):
            if (i, j) in pairs:
                value = pairs[(i, j)]
            elif (j, i) in pairs:
                value = pairs[(j, i)]
            else:
                raise DimensionError(f"missing pairwise correlation for ({i + 1}, {j + 1})")
            if not np.isfinite(value) or abs(value) > 1.0 + 1e-12:
                raise NumericalError(f"pairwise correlation ({i + 1}, {j + 1}) = {value} outside [-1, 1]")
            mat[i, j] = mat[j, i] = float(np.clip(value, -1.0, 1.0))
    if p == 1:
        return mat, RepairLog(False, EIGENVALUE_FLOOR, 1.0, 0.0, 0)
    return repair_correlation(mat)
