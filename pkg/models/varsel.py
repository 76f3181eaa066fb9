"""
Robust Bayesian variable selection.

    p_γ ~ Beta(a, b),  γ_i | p_γ ~ Bernoulli(p_γ)
    σ² ~ InvGamma(a_σ, b_σ)
    β_γ | γ, σ² ~ N(0, nσ²(X_γᵀX_γ)⁻¹)          (Zellner g-prior, g = n)
    y = X_γ β_γ + ε,  ε ~ N(0, σ² I)

X_γ always carries the intercept column. Summaries are Huber
t-statistics: T1 for every covariate in the full model, then T2 for the
covariates of the reduced model G, in index order.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import betaln, gammaln, logsumexp

from abc_engine.reference_table import SimulatorModel
from core.errors import ConfigError, DimensionError
from core.parallel import parallel_map
from core.samples import SummaryMap
from discrete_copula.ranking import ModelProbability, all_models, as_gamma, rank_results
from models.robust import check_design, huber_t_statistics_batch, robust_scale, robust_t_statistics

logger = logging.getLogger(__name__)

MAX_ENUMERATION_P = 20


def standardize(covariates: np.ndarray) -> np.ndarray:
    covariates = np.asarray(covariates, dtype=float)
    sd = covariates.std(axis=0)
    if np.any(sd == 0):
        raise DimensionError("constant covariate column cannot be standardized")
    return (covariates - covariates.mean(axis=0)) / sd


@dataclass(frozen=True)
class VarselModel:
    X: np.ndarray                   # n × (p_cov + 1), intercept first
    y: np.ndarray
    a: float = 2.0
    b: float = 10.0
    a_sigma: float = 5.0
    b_sigma: float = 5.0 * 200.0 ** 2
    G: tuple[int, ...] = field(default=())   # 0-based covariate indices of the reduced model

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.size:
            raise DimensionError(f"design {X.shape} does not match response of length {y.size}")
        if not np.allclose(X[:, 0], 1.0):
            raise DimensionError("first design column must be the intercept")
        if any(not 0 <= g < X.shape[1] - 1 for g in self.G):
            raise DimensionError(f"reduced model {list(self.G)} out of range for {X.shape[1] - 1} covariates")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "G", tuple(sorted(set(int(g) for g in self.G))))

    @classmethod
    def from_covariates(cls, covariates: np.ndarray, y: np.ndarray, **kwargs) -> "VarselModel":
        z = standardize(covariates)
        return cls(np.column_stack([np.ones(z.shape[0]), z]), y, **kwargs)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p_cov(self) -> int:
        return self.X.shape[1] - 1

    @property
    def q(self) -> int:
        return self.p_cov + len(self.G)

    def design(self, gamma) -> np.ndarray:
        cols = [0] + [i + 1 for i, g in enumerate(gamma) if g]
        return self.X[:, cols]

    def with_response(self, y: np.ndarray) -> "VarselModel":
        return VarselModel(self.X, y, self.a, self.b, self.a_sigma, self.b_sigma, self.G)

    def with_reduced(self, G) -> "VarselModel":
        return VarselModel(self.X, self.y, self.a, self.b, self.a_sigma, self.b_sigma, tuple(G))

    def describe(self) -> dict:
        return {
            "n": self.n, "p_cov": self.p_cov, "a": self.a, "b": self.b,
            "a_sigma": self.a_sigma, "b_sigma": self.b_sigma, "G": list(self.G),
            "X_sum": float(self.X.sum()),
        }


# ---------------------------------------------------------------------------
# Generative model
# ---------------------------------------------------------------------------

def varsel_prior_sample_batch(model: VarselModel, n: int, gen: np.random.Generator) -> np.ndarray:
    p_gamma = gen.beta(model.a, model.b, size=n)
    return (gen.random((n, model.p_cov)) < p_gamma[:, None]).astype(float)


def varsel_prior_sample(model: VarselModel, gen: np.random.Generator) -> np.ndarray:
    return varsel_prior_sample_batch(model, 1, gen)[0]


def log_prior_mass(model: VarselModel, gamma) -> float:
    """Beta-binomial prior mass of one indicator vector."""
    k = int(np.sum(gamma))
    return float(betaln(model.a + k, model.b + model.p_cov - k) - betaln(model.a, model.b))


def _synthetic_response(model: VarselModel, gamma, sigma2: float, gen: np.random.Generator) -> np.ndarray:
    Xg = model.design(gamma)
    if np.linalg.matrix_rank(Xg) < Xg.shape[1]:
        raise DimensionError(f"X_γ is rank deficient for γ={[int(g) for g in gamma]}")
    cov = model.n * sigma2 * np.linalg.inv(Xg.T @ Xg)
    beta = gen.multivariate_normal(np.zeros(Xg.shape[1]), cov, method="cholesky")
    return Xg @ beta + np.sqrt(sigma2) * gen.standard_normal(model.n)


def draw_sigma2(model: VarselModel, gen: np.random.Generator, size=None):
    return 1.0 / gen.gamma(model.a_sigma, 1.0 / model.b_sigma, size=size)


def varsel_simulate(model: VarselModel, gamma, gen: np.random.Generator) -> np.ndarray:
    gamma = as_gamma(np.asarray(gamma, dtype=int), model.p_cov)
    y = _synthetic_response(model, gamma, draw_sigma2(model, gen), gen)
    return robust_summaries(model.X, y, model.G)


def varsel_simulate_batch(model: VarselModel, gammas: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Summaries for each γ row; rank-deficient X_γ rows come back as NaN."""
    gammas = np.atleast_2d(gammas).astype(int)
    m = gammas.shape[0]
    sigma2 = draw_sigma2(model, gen, size=m)
    Y = np.full((m, model.n), np.nan)
    for r in range(m):
        try:
            Y[r] = _synthetic_response(model, gammas[r], sigma2[r], gen)
        except (DimensionError, np.linalg.LinAlgError):
            continue
    out = np.full((m, model.q), np.nan)
    ok = np.all(np.isfinite(Y), axis=1)
    if np.any(ok):
        out[ok] = robust_summaries_batch(model.X, Y[ok], model.G)
    return out


# ---------------------------------------------------------------------------
# Robust summaries
# ---------------------------------------------------------------------------

def _reduced_design(X: np.ndarray, G) -> np.ndarray:
    return X[:, [0] + [g + 1 for g in G]]


def robust_summaries(X: np.ndarray, y: np.ndarray, G=()) -> np.ndarray:
    """(T1 for every covariate, T2 for each covariate of G)."""
    X = check_design(X)
    t1 = robust_t_statistics(X, y)[1:]
    if not G:
        return t1
    t2 = robust_t_statistics(_reduced_design(X, sorted(G)), y)[1:]
    return np.concatenate([t1, t2])


def robust_summaries_batch(X: np.ndarray, Y: np.ndarray, G=()) -> np.ndarray:
    t1 = huber_t_statistics_batch(X, Y)[:, 1:]
    if not G:
        return t1
    t2 = huber_t_statistics_batch(_reduced_design(X, sorted(G)), Y)[:, 1:]
    return np.hstack([t1, t2])


def varsel_summary_map(p_cov: int, G=()) -> SummaryMap:
    """s_(i) = (T1_i, T2_i) for i in G, T1_i otherwise; pairs by union."""
    G = sorted(G)
    univariate = [[i] + ([p_cov + G.index(i)] if i in G else []) for i in range(p_cov)]
    return SummaryMap.from_univariate(univariate)


def varsel_simulator_model(model: VarselModel) -> SimulatorModel:
    return SimulatorModel(
        name=f"varsel_p{model.p_cov}",
        p=model.p_cov,
        q=model.q,
        prior_sample=lambda gen: varsel_prior_sample(model, gen),
        simulate=lambda gamma, gen: varsel_simulate(model, gamma, gen),
        prior_sample_batch=lambda n, gen: varsel_prior_sample_batch(model, n, gen),
        simulate_batch=lambda gammas, gen: varsel_simulate_batch(model, gammas, gen),
        config=model.describe(),
    )


# ---------------------------------------------------------------------------
# Exact g-prior enumeration
# ---------------------------------------------------------------------------

def exact_log_marginal(model: VarselModel, gamma, include_constants: bool = False, with_prior: bool = True) -> float:
    """log L(y | γ) (+ log p(γ)); the displayed proportional form unless include_constants."""
    gamma = as_gamma(np.asarray(gamma, dtype=int), model.p_cov)
    Xg = model.design(gamma)
    if np.linalg.matrix_rank(Xg) < Xg.shape[1]:
        raise DimensionError(f"X_γᵀX_γ is singular for γ={list(gamma)}")
    n, q_gamma = model.n, Xg.shape[1]
    y = model.y
    xty = Xg.T @ y
    quad = float(xty @ np.linalg.solve(Xg.T @ Xg, xty))
    shape = model.a_sigma + n / 2.0
    rss = 2.0 * model.b_sigma + y @ y - n / (n + 1.0) * quad

    out = -0.5 * q_gamma * np.log(n + 1.0) - shape * np.log(rss)
    if include_constants:
        out += (
            -0.5 * n * np.log(2.0 * np.pi)
            + model.a_sigma * np.log(model.b_sigma)
            - gammaln(model.a_sigma)
            + gammaln(shape)
            + shape * np.log(2.0)
        )
    if with_prior:
        out += log_prior_mass(model, gamma)
    return float(out)


def exact_enumerate(model: VarselModel, threads: int = 1) -> list[ModelProbability]:
    """Every γ scored by exact_log_marginal, normalized by log-sum-exp, best first."""
    if model.p_cov > MAX_ENUMERATION_P:
        raise DimensionError(f"exact enumeration is limited to {MAX_ENUMERATION_P} covariates, got {model.p_cov}")
    models = all_models(model.p_cov)
    scores = np.array(parallel_map(lambda g: exact_log_marginal(model, g), models, threads))
    log_post = scores - logsumexp(scores)
    logger.info("Enumerated %d models exactly", len(models))
    return rank_results(ModelProbability(g, float(lp), 0.0) for g, lp in zip(models, log_post))


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------

def add_outlier(model: VarselModel, factor: float = 10.0) -> VarselModel:
    """Shift the last response by `factor` robust residual scales of the full-model fit."""
    y = np.array(model.y)
    y[-1] += factor * robust_scale(model.X, model.y)
    return model.with_response(y)


def synthetic_varsel_data(
    gen: np.random.Generator,
    n: int = 50,
    p_cov: int = 10,
    active: tuple[int, ...] = (1, 4),
    effect: float = 150.0,
    sigma: float = 100.0,
    collinear: tuple[int, int] = (6, 7),
    **kwargs,
) -> VarselModel:
    """Standardized covariates with one highly collinear pair and a strong active set (0-based)."""
    if p_cov < 2 or max(active + collinear) >= p_cov:
        raise DimensionError(f"active {active} / collinear {collinear} out of range for p_cov={p_cov}")
    raw = gen.standard_normal((n, p_cov))
    i, j = collinear
    raw[:, j] = raw[:, i] + 0.1 * gen.standard_normal(n)
    z = standardize(raw)
    beta = np.zeros(p_cov)
    beta[list(active)] = effect
    y = 100.0 + z @ beta + sigma * gen.standard_normal(n)
    return VarselModel.from_covariates(raw, y, **kwargs)


def load_varsel_csv(path: str | Path, **kwargs) -> VarselModel:
    """Columns `y` and `x1..xk`; covariates are centred and standardized on load."""
    df = pd.read_csv(path, float_precision="round_trip")
    if "y" not in df.columns:
        raise ConfigError(f"{path}: missing response column 'y'")
    xcols = [f"x{k}" for k in range(1, len(df.columns))]
    if sorted(c for c in df.columns if c != "y") != sorted(xcols):
        raise ConfigError(f"{path}: covariate columns must be named x1..x{len(xcols)}")
    if df.isna().to_numpy().any():
        raise ConfigError(f"{path}: dataset contains missing values")
    try:
        model = VarselModel.from_covariates(df[xcols].to_numpy(float), df["y"].to_numpy(float), **kwargs)
        check_design(model.X)
    except DimensionError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return model
