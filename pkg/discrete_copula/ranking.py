"""
Joint model probabilities under the latent Gaussian copula, and rankings.

P(γ) = P(∩_i {Z_i > t_i if γ_i = 1, Z_i <= t_i if γ_i = 0}), Z ~ N(0, Λ).

Flipping signs W = DZ (D_ii = -1 where γ_i = 1) turns every event into an
upper limit W_i <= b_i = D_ii t_i, which is evaluated by Genz's
separation of variables with randomized (scrambled Sobol) QMC points.
Λ = I and p <= 2 are computed exactly.
"""

import logging
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.stats import qmc
from scipy.special import ndtr, ndtri

from abc_engine.reference_table import ReferenceTable
from abc_engine.selection import abc_nearest
from core.distance import DistanceSpec
from core.errors import DimensionError
from core.parallel import parallel_map
from core.rng import SeededRng
from discrete_copula.fit import DiscreteCopulaPosterior, _check_binary
from discrete_copula.orthant import bvn_cdf

logger = logging.getLogger(__name__)

N_RANDOMIZATIONS = 10
MIN_LOG2_POINTS = 10
MAX_LOG2_POINTS = 16
TARGET_REL_ERROR = 0.01
MAX_EXHAUSTIVE_P = 20


@dataclass(frozen=True)
class ModelProbability:
    gamma: tuple[int, ...]
    log_prob: float
    mc_se: float = 0.0      # standard error of log_prob
    rank: int = 0

    @property
    def bitstring(self) -> str:
        return "".join(str(g) for g in self.gamma)


def as_gamma(gamma: Sequence[int] | str, p: int | None = None) -> tuple[int, ...]:
    if isinstance(gamma, str):
        gamma = [int(ch) for ch in gamma.strip()]
    arr = np.asarray(gamma)
    if arr.ndim != 1 or not np.all(np.isin(arr, (0, 1))):
        raise DimensionError(f"model indicator must be a 0/1 vector, got {gamma!r}")
    if p is not None and arr.size != p:
        raise DimensionError(f"model indicator has length {arr.size}, expected {p}")
    return tuple(int(g) for g in arr)


# ---------------------------------------------------------------------------
# Rectangle probabilities
# ---------------------------------------------------------------------------

def genz_upper_probability(chol: np.ndarray, upper: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Separation-of-variables integrand P(W <= upper), W = L·Y, at each QMC point."""
    p = upper.size
    m = points.shape[0]
    y = np.zeros((m, p))
    e = ndtr(np.full(m, upper[0] / chol[0, 0]))
    f = e.copy()
    for i in range(1, p):
        y[:, i - 1] = ndtri(np.clip(points[:, i - 1] * e, 1e-300, 1.0 - 1e-16))
        e = ndtr((upper[i] - y[:, :i] @ chol[i, :i]) / chol[i, i])
        f *= e
    return f


def _rqmc_probability(cov: np.ndarray, upper: np.ndarray, rng: SeededRng) -> tuple[float, float]:
    # widest limits last: the early, tight factors carry most of the variance
    order = np.argsort(upper, kind="stable")
    cov = cov[np.ix_(order, order)]
    upper = upper[order]
    chol = np.linalg.cholesky(cov)
    gen = rng.generator()

    prob, se = 0.0, np.inf
    for log2 in range(MIN_LOG2_POINTS, MAX_LOG2_POINTS + 1):
        means = np.empty(N_RANDOMIZATIONS)
        for r in range(N_RANDOMIZATIONS):
            sobol = qmc.Sobol(d=upper.size - 1, scramble=True, seed=gen)
            means[r] = genz_upper_probability(chol, upper, sobol.random_base2(log2)).mean()
        prob = float(means.mean())
        se = float(means.std(ddof=1) / np.sqrt(N_RANDOMIZATIONS))
        if prob > 0 and se <= TARGET_REL_ERROR * prob:
            break
    else:
        logger.debug("rectangle probability %.3g stopped at relative error %.3g", prob, se / prob if prob else np.inf)
    return prob, se


def model_log_probability(post: DiscreteCopulaPosterior, gamma: Sequence[int] | str, seed: int = 0) -> ModelProbability:
    """log P(γ) with its standard error; deterministic for a given seed and γ."""
    g = as_gamma(gamma, post.p)
    signs = np.where(np.array(g) == 1, -1.0, 1.0)
    t = post.thresholds
    upper = signs * t
    # P(W_i <= b_i) for each margin on its own
    single = np.where(np.array(g) == 1, 1.0 - post.probs, post.probs)

    if np.array_equal(post.lambda_, np.eye(post.p)):
        with np.errstate(divide="ignore"):
            return ModelProbability(g, float(np.sum(np.log(single))), 0.0)
    if post.p == 1:
        return ModelProbability(g, float(np.log(single[0])), 0.0)
    if post.p == 2:
        prob = bvn_cdf(upper[0], upper[1], float(signs[0] * signs[1] * post.lambda_[0, 1]))
        with np.errstate(divide="ignore"):
            return ModelProbability(g, float(np.log(prob)), 0.0)

    cov = post.lambda_ * np.outer(signs, signs)
    bits = int("".join(map(str, g)), 2)
    prob, se = _rqmc_probability(cov, upper, SeededRng(seed, ("gamma", bits)))
    if prob <= 0.0:
        return ModelProbability(g, -np.inf, np.inf)
    return ModelProbability(g, float(np.log(prob)), se / prob)


# ---------------------------------------------------------------------------
# Rankings
# ---------------------------------------------------------------------------

def rank_results(results: Iterable[ModelProbability]) -> list[ModelProbability]:
    ordered = sorted(results, key=lambda r: (-r.log_prob, r.bitstring))
    return [ModelProbability(r.gamma, r.log_prob, r.mc_se, k + 1) for k, r in enumerate(ordered)]


def all_models(p: int) -> list[tuple[int, ...]]:
    if p > MAX_EXHAUSTIVE_P:
        raise DimensionError(f"exhaustive enumeration is limited to p <= {MAX_EXHAUSTIVE_P}, got p={p}")
    return [tuple(g) for g in product((0, 1), repeat=p)]


def rank_models(
    post: DiscreteCopulaPosterior,
    candidates: Sequence[Sequence[int] | str] | None = None,
    seed: int = 0,
    threads: int = 1,
) -> list[ModelProbability]:
    """Candidates (every γ when omitted) by descending copula probability, ties by bitstring."""
    models = all_models(post.p) if candidates is None else [as_gamma(c, post.p) for c in candidates]
    if not models:
        raise DimensionError("no candidate models to rank")
    results = parallel_map(lambda g: model_log_probability(post, g, seed), models, threads)
    logger.info("Ranked %d model(s)", len(results))
    return rank_results(results)


def standard_abc_ranking(
    table: ReferenceTable,
    s_obs: np.ndarray,
    subset: Sequence[int],
    n_keep: int,
    spec: DistanceSpec | None = None,
) -> list[ModelProbability]:
    """Model frequencies among the n_keep rows nearest on the full summary vector."""
    _check_binary(table)
    kept = abc_nearest(table, s_obs, subset, n_keep, spec)
    gammas, counts = np.unique(kept.params.astype(int), axis=0, return_counts=True)
    freq = counts / n_keep
    results = [
        ModelProbability(tuple(int(v) for v in g), float(np.log(f)), float(np.sqrt((1.0 - f) / (n_keep * f))))
        for g, f in zip(gammas, freq)
    ]
    return rank_results(results)


def top_overlap(a: Sequence[ModelProbability], b: Sequence[ModelProbability], k: int = 10) -> int:
    """Number of models shared by the top-k of two rankings."""
    return len({r.gamma for r in a[:k]} & {r.gamma for r in b[:k]})


def ranking_frame(ranked: Sequence[ModelProbability]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "gamma": [r.bitstring for r in ranked],
            "log_prob": [r.log_prob for r in ranked],
            "mc_se": [r.mc_se for r in ranked],
            "rank": [r.rank for r in ranked],
        }
    )
