"""
Univariate and multivariate g-and-k models.

    Q(u | A, B, g, k) = A + B [1 + c (1 - e^{-gz}) / (1 + e^{-gz})] (1 + z²)^k z,   z = Φ⁻¹(u)

The multivariate version couples q margins through a Gaussian copula with
correlation V: z ~ N_q(0, V) and column j is Q(Φ(z_j) | margin j). Since
Φ⁻¹(Φ(z)) = z the transform is applied to z directly.

Parameter vector layout: (A_1, B_1, g_1, k_1, ..., A_q, B_q, g_q, k_q, ν_12, ν_13, ..., ν_{q-1,q}).
Summary layout:          (S_A, S_B, S_g, S_k) per margin, then the normal-scores
                         correlation of every column pair in the same order as ν.
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import stats
from scipy.special import ndtri

from abc_engine.reference_table import SimulatorModel
from copula.correlation import pairwise_lambda
from core.errors import DimensionError, NumericalError
from core.samples import SummaryMap, order_statistic_rank

logger = logging.getLogger(__name__)

C_DEFAULT = 0.8
N_OBS_DEFAULT = 1757
_SIM_CHUNK = 64


@dataclass(frozen=True)
class GkParams:
    A: float
    B: float
    g: float
    k: float
    c: float = C_DEFAULT

    def __post_init__(self):
        if not self.B > 0:
            raise DimensionError(f"g-and-k scale B must be positive, got {self.B}")
        if not self.k > -0.5:
            raise DimensionError(f"g-and-k kurtosis k must exceed -1/2, got {self.k}")


def gk_transform(z, A, B, g, k, c: float = C_DEFAULT):
    """g-and-k quantile as a function of the standard normal z; broadcasts over all arguments."""
    z = np.asarray(z, dtype=float)
    # (1 - e^{-gz}) / (1 + e^{-gz}) = tanh(gz / 2)
    return A + B * (1.0 + c * np.tanh(g * z / 2.0)) * (1.0 + z ** 2) ** k * z


def gk_quantile(u, params: GkParams):
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise DimensionError("g-and-k quantile needs probabilities strictly inside (0, 1)")
    out = gk_transform(ndtri(u), params.A, params.B, params.g, params.k, params.c)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Summary statistics
# ---------------------------------------------------------------------------

def _sorted_quantiles(sorted_data: np.ndarray, probs: tuple[float, ...]) -> np.ndarray:
    """Order statistics k = ceil(prob·n) along axis -1 of already sorted data."""
    n = sorted_data.shape[-1]
    ranks = [order_statistic_rank(pr, n) - 1 for pr in probs]
    return sorted_data[..., ranks]


def gk_summaries_sorted(sorted_data: np.ndarray) -> np.ndarray:
    """(S_A, S_B, S_g, S_k) along the last axis of sorted data."""
    if sorted_data.shape[-1] < 8:
        raise DimensionError(f"g-and-k summaries need at least 8 observations, got {sorted_data.shape[-1]}")
    L1, L2, L3 = np.moveaxis(_sorted_quantiles(sorted_data, (0.25, 0.5, 0.75)), -1, 0)
    E1, E3, E5, E7 = np.moveaxis(_sorted_quantiles(sorted_data, (0.125, 0.375, 0.625, 0.875)), -1, 0)
    s_b = L3 - L1
    if np.any(s_b == 0):
        raise ValueError("zero interquartile range")
    return np.stack([L2, s_b, (L3 + L1 - 2.0 * L2) / s_b, (E7 - E5 + E3 - E1) / s_b], axis=-1)


def gk_summaries(column: np.ndarray) -> np.ndarray:
    """S_A = L₂, S_B = L₃ - L₁, S_g = (L₃ + L₁ - 2L₂)/S_B, S_k = (E₇ - E₅ + E₃ - E₁)/S_B."""
    return gk_summaries_sorted(np.sort(np.asarray(column, dtype=float).ravel()))


def normal_scores_correlation(col_a: np.ndarray, col_b: np.ndarray) -> float:
    return pairwise_lambda(col_a, col_b)


def _normal_scores_batch(data: np.ndarray) -> np.ndarray:
    """Normal scores along axis -2 of (..., n, q) data (tie-free input)."""
    n = data.shape[-2]
    ranks = np.argsort(np.argsort(data, axis=-2, kind="stable"), axis=-2, kind="stable") + 1
    return ndtri(ranks / (n + 1))


def _score_correlations(scores: np.ndarray) -> np.ndarray:
    centered = scores - scores.mean(axis=-2, keepdims=True)
    cov = np.einsum("...ni,...nj->...ij", centered, centered)
    d = np.sqrt(np.einsum("...ii->...i", cov))
    corr = cov / (d[..., :, None] * d[..., None, :])
    q = scores.shape[-1]
    iu = np.array(list(combinations(range(q), 2)), dtype=int).reshape(-1, 2)
    return corr[..., iu[:, 0], iu[:, 1]]


def multigk_summary_vector(data: np.ndarray) -> np.ndarray:
    """Summaries of one (n, q) dataset or a stack (m, n, q) of datasets."""
    data = np.asarray(data, dtype=float)
    margin = gk_summaries_sorted(np.sort(np.swapaxes(data, -1, -2), axis=-1))   # (..., q, 4)
    flat = margin.reshape(*margin.shape[:-2], -1)
    if data.shape[-1] < 2:
        return flat
    return np.concatenate([flat, _score_correlations(_normal_scores_batch(data))], axis=-1)


# ---------------------------------------------------------------------------
# Multivariate model
# ---------------------------------------------------------------------------

def wishart_correlation_sample(q: int, gen: np.random.Generator, size: int | None = None) -> np.ndarray:
    """W ~ Wishart(I_q, q) rescaled to unit diagonal, D^{-1/2} W D^{-1/2}."""
    if q < 2:
        raise DimensionError(f"Wishart correlation needs q >= 2, got {q}")
    w = stats.wishart(df=q, scale=np.eye(q)).rvs(size=1 if size is None else size, random_state=gen)
    w = np.asarray(w).reshape(-1, q, q)
    d = np.sqrt(np.einsum("kii->ki", w))
    corr = w / (d[:, :, None] * d[:, None, :])
    idx = np.arange(q)
    corr[:, idx, idx] = 1.0
    return corr[0] if size is None else corr


def correlation_from_vector(nu: np.ndarray, q: int) -> np.ndarray:
    v = np.eye(q)
    for value, (i, j) in zip(np.asarray(nu, dtype=float), combinations(range(q), 2)):
        v[i, j] = v[j, i] = value
    return v


@dataclass(frozen=True)
class MultiGkModel:
    q: int
    margins: tuple[GkParams, ...]
    V: np.ndarray = field(default=None)
    n_obs: int = N_OBS_DEFAULT

    def __post_init__(self):
        if self.q < 1 or len(self.margins) != self.q:
            raise DimensionError(f"need {self.q} margins, got {len(self.margins)}")
        v = np.eye(self.q) if self.V is None else np.array(self.V, dtype=float)
        if v.shape != (self.q, self.q) or not np.allclose(v, v.T) or not np.allclose(np.diag(v), 1.0):
            raise DimensionError("V must be a symmetric q×q matrix with unit diagonal")
        try:
            np.linalg.cholesky(v)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("V is not positive definite") from exc
        v.setflags(write=False)
        object.__setattr__(self, "margins", tuple(self.margins))
        object.__setattr__(self, "V", v)
        if self.n_obs < 8:
            raise DimensionError(f"datasets need at least 8 observations, got {self.n_obs}")

    @property
    def p(self) -> int:
        return 4 * self.q + self.q * (self.q - 1) // 2

    def to_vector(self) -> np.ndarray:
        head = [v for m in self.margins for v in (m.A, m.B, m.g, m.k)]
        tail = [self.V[i, j] for i, j in combinations(range(self.q), 2)]
        return np.array(head + tail, dtype=float)

    @classmethod
    def from_vector(cls, theta: np.ndarray, q: int, n_obs: int = N_OBS_DEFAULT, c: float = C_DEFAULT) -> "MultiGkModel":
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != 4 * q + q * (q - 1) // 2:
            raise DimensionError(f"θ has {theta.size} entries, q={q} needs {4 * q + q * (q - 1) // 2}")
        margins = tuple(GkParams(*theta[4 * j:4 * j + 4], c=c) for j in range(q))
        return cls(q, margins, correlation_from_vector(theta[4 * q:], q), n_obs)


def parameter_names(q: int) -> list[str]:
    names = [f"{s}{j + 1}" for j in range(q) for s in ("A", "B", "g", "k")]
    return names + [f"nu{i + 1}{j + 1}" for i, j in combinations(range(q), 2)]


def multigk_simulate(model: MultiGkModel, gen: np.random.Generator) -> np.ndarray:
    """(n_obs, q) dataset: z ~ N_q(0, V) per row, column j through margin j."""
    chol = np.linalg.cholesky(model.V)
    z = gen.standard_normal((model.n_obs, model.q)) @ chol.T
    cols = [gk_transform(z[:, j], m.A, m.B, m.g, m.k, m.c) for j, m in enumerate(model.margins)]
    return np.column_stack(cols)


def gk_summary_map(q: int) -> SummaryMap:
    """S_A ↔ A, (S_B, S_k) ↔ B, S_g ↔ g, S_k ↔ k, ncorr_ij ↔ ν_ij; pairs by union."""
    univariate = []
    for j in range(q):
        base = 4 * j
        univariate += [[base], [base + 1, base + 3], [base + 2], [base + 3]]
    univariate += [[4 * q + r] for r in range(q * (q - 1) // 2)]
    return SummaryMap.from_univariate(univariate)


# ---------------------------------------------------------------------------
# Prior box and the simulator wiring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GkPriorBox:
    A: tuple[float, float] = (-0.1, 0.1)
    B: tuple[float, float] = (0.0, 0.05)
    g: tuple[float, float] = (-1.0, 1.0)
    k: tuple[float, float] = (-0.2, 0.5)

    def bounds(self) -> np.ndarray:
        return np.array([self.A, self.B, self.g, self.k], dtype=float)

    def log_density(self, values: np.ndarray, kinds: list[str]) -> float:
        """Uniform log density (up to a constant) of margin parameters of the given kinds."""
        for v, kind in zip(np.asarray(values, dtype=float).ravel(), kinds):
            lo, hi = getattr(self, kind)
            if not lo < v < hi:
                return -np.inf
        return 0.0


def gk_prior_sample_batch(q: int, n: int, gen: np.random.Generator, box: GkPriorBox = GkPriorBox()) -> np.ndarray:
    lo, hi = box.bounds().T
    margins = gen.uniform(lo, hi, size=(n, q, 4)).reshape(n, 4 * q)
    if q < 2:
        return margins
    v = wishart_correlation_sample(q, gen, size=n)
    iu = np.array(list(combinations(range(q), 2)))
    return np.hstack([margins, v[:, iu[:, 0], iu[:, 1]]])


def gk_log_prior(theta: np.ndarray, q: int, box: GkPriorBox = GkPriorBox()) -> float:
    """Box support for the margins; V has no closed-form log density and enters as a constant."""
    theta = np.asarray(theta, dtype=float).ravel()
    kinds = ["A", "B", "g", "k"] * q
    return box.log_density(theta[:4 * q], kinds)


def gk_simulate_params(theta: np.ndarray, q: int, n_obs: int, gen: np.random.Generator) -> np.ndarray:
    model = MultiGkModel.from_vector(theta, q, n_obs)
    return multigk_summary_vector(multigk_simulate(model, gen))


def gk_simulate_batch(thetas: np.ndarray, q: int, n_obs: int, gen: np.random.Generator) -> np.ndarray:
    """Summaries for each row of θ, datasets generated in small stacks."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    m = thetas.shape[0]
    npair = q * (q - 1) // 2
    out = np.full((m, 4 * q + npair), np.nan)
    iu = list(combinations(range(q), 2))
    for start in range(0, m, _SIM_CHUNK):
        block = thetas[start:start + _SIM_CHUNK]
        b = block.shape[0]
        v = np.broadcast_to(np.eye(q), (b, q, q)).copy()
        for r, (i, j) in enumerate(iu):
            v[:, i, j] = v[:, j, i] = block[:, 4 * q + r]
        try:
            chol = np.linalg.cholesky(v)
        except np.linalg.LinAlgError:
            # leave the block as NaN; failed rows are re-simulated one at a time
            continue
        z = np.einsum("bnj,bij->bni", gen.standard_normal((b, n_obs, q)), chol)
        par = block[:, :4 * q].reshape(b, q, 4)
        x = gk_transform(z, par[:, None, :, 0], par[:, None, :, 1], par[:, None, :, 2], par[:, None, :, 3])
        with np.errstate(invalid="ignore", divide="ignore"):
            try:
                out[start:start + b] = multigk_summary_vector(x)
            except ValueError:
                continue
    return out


def gk_simulator_model(q: int, n_obs: int = N_OBS_DEFAULT, box: GkPriorBox = GkPriorBox()) -> SimulatorModel:
    return SimulatorModel(
        name=f"gk_q{q}",
        p=4 * q + q * (q - 1) // 2,
        q=4 * q + q * (q - 1) // 2,
        prior_sample=lambda gen: gk_prior_sample_batch(q, 1, gen, box)[0],
        simulate=lambda theta, gen: gk_simulate_params(theta, q, n_obs, gen),
        log_prior=lambda theta: gk_log_prior(theta, q, box),
        prior_sample_batch=lambda n, gen: gk_prior_sample_batch(q, n, gen, box),
        simulate_batch=lambda thetas, gen: gk_simulate_batch(thetas, q, n_obs, gen),
        config={"q": q, "n_obs": n_obs, "box": [box.A, box.B, box.g, box.k]},
    )
