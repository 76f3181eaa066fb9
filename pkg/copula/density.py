"""
The fitted meta-Gaussian posterior: log density and sampling.

    g(θ) = |Λ|^{-1/2} exp{½ ηᵀ(I - Λ⁻¹)η} ∏ g_i(θ_i),   η_i = Φ⁻¹(G_i(θ_i))

With exact normal marginals this is the multivariate normal density with
correlation Λ, which the tests check pointwise.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.special import ndtr

from copula.correlation import EIGENVALUE_FLOOR, RepairLog
from core.errors import DimensionError, NumericalError
from core.rng import SeededRng
from core.samples import WeightedSampleSet


@dataclass(frozen=True)
class CopulaPosterior:
    marginals: tuple
    lambda_: np.ndarray
    repair: RepairLog = field(default_factory=lambda: RepairLog(False, EIGENVALUE_FLOOR, 1.0, 0.0))
    indices: tuple[int, ...] | None = None   # model parameter index of each margin

    def __post_init__(self):
        lam = np.array(self.lambda_, dtype=float)
        p = len(self.marginals)
        if lam.shape != (p, p):
            raise DimensionError(f"correlation matrix is {lam.shape}, expected ({p}, {p})")
        if not np.allclose(lam, lam.T, atol=1e-12) or not np.allclose(np.diag(lam), 1.0, atol=1e-12):
            raise NumericalError("Λ must be symmetric with unit diagonal")
        try:
            chol = linalg.cholesky(lam, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError("Λ is not positive definite") from exc
        lam.setflags(write=False)
        object.__setattr__(self, "marginals", tuple(self.marginals))
        object.__setattr__(self, "lambda_", lam)
        object.__setattr__(self, "_chol", chol)
        if self.indices is None:
            object.__setattr__(self, "indices", tuple(range(p)))

    @property
    def p(self) -> int:
        return len(self.marginals)

    def marginalize(self, positions: Sequence[int]) -> "CopulaPosterior":
        """Sub-posterior over the margins at `positions` (Λ sub-block)."""
        pos = [int(k) for k in positions]
        if not pos or any(k < 0 or k >= self.p for k in pos):
            raise DimensionError(f"invalid margin positions {pos} for p={self.p}")
        return CopulaPosterior(
            tuple(self.marginals[k] for k in pos),
            self.lambda_[np.ix_(pos, pos)],
            self.repair,
            tuple(self.indices[k] for k in pos),
        )

    def normal_scores(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        return np.column_stack([m.normal_score(theta[:, i]) for i, m in enumerate(self.marginals)])

    def marginal_logpdf(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        return np.column_stack([m.logpdf(theta[:, i]) for i, m in enumerate(self.marginals)])


def copula_log_density(post: CopulaPosterior, theta: np.ndarray) -> np.ndarray | float:
    """log g(θ) for one point (returns float) or each row of an (m, p) array."""
    arr = np.asarray(theta, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != post.p:
        raise DimensionError(f"θ has {arr.shape[1]} entries, posterior has p={post.p}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError("θ must be finite")

    eta = post.normal_scores(arr)
    log_marg = post.marginal_logpdf(arr).sum(axis=1)
    log_det = 2.0 * np.sum(np.log(np.diag(post._chol)))
    solved = linalg.cho_solve((post._chol, True), eta.T).T
    quad = np.einsum("ij,ij->i", eta, eta) - np.einsum("ij,ij->i", eta, solved)
    out = -0.5 * log_det + 0.5 * quad + log_marg
    return float(out[0]) if single else out


def copula_sample(post: CopulaPosterior, m: int, rng: SeededRng) -> WeightedSampleSet:
    """η ~ N_p(0, Λ) via Cholesky, θ_i = quantile_i(Φ(η_i)); equal weights."""
    if m < 1:
        raise DimensionError(f"need m >= 1 draws, got {m}")
    gen = rng.generator()
    eta = gen.standard_normal((m, post.p)) @ post._chol.T
    u = ndtr(eta)
    theta = np.column_stack([marg.quantile(u[:, i]) for i, marg in enumerate(post.marginals)])
    return WeightedSampleSet.equally_weighted(theta)
