"""
Univariate marginal estimates for the meta-Gaussian posterior.

MarginalEstimate keeps the sorted ABC sample of one parameter and gives
  - cdf: linear interpolation through (x_(k), k/(n'+1)), clamped to
    [1/(n'+1), n'/(n'+1)] outside the sample range,
  - quantile: the inverse interpolation, clamped to the sample extremes,
  - pdf: Gaussian-kernel density with Silverman's rule-of-thumb bandwidth.

NormalMarginal offers the same interface for an exact N(μ, σ²) margin.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from core.errors import DimensionError, NumericalError

_SQRT_2PI = np.sqrt(2.0 * np.pi)
_KDE_CHUNK = 2_000_000


def gaussian_kernel(x: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-x ** 2 / (2 * bandwidth ** 2)) / (_SQRT_2PI * bandwidth)


def weighted_quantile(values: np.ndarray, weights: np.ndarray, prob: float) -> float:
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    k = min(int(np.searchsorted(cum, prob * cum[-1], side="left")), len(values) - 1)
    return float(values[order][k])


def silverman_bandwidth(values: np.ndarray, weights: np.ndarray | None = None) -> float:
    """0.9 · min(sd, IQR/1.34) · n^(-1/5), with n the effective sample size for weights."""
    values = np.asarray(values, dtype=float).ravel()
    if weights is None:
        weights = np.full(values.size, 1.0 / values.size)
    weights = np.asarray(weights, dtype=float) / np.sum(weights)
    mean = weights @ values
    sd = float(np.sqrt(max(weights @ (values - mean) ** 2, 0.0)))
    iqr = weighted_quantile(values, weights, 0.75) - weighted_quantile(values, weights, 0.25)
    n_eff = 1.0 / np.sum(weights ** 2)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if not spread > 0:
        raise NumericalError("zero-variance sample has no kernel bandwidth")
    return float(0.9 * spread * n_eff ** (-0.2))


@dataclass(frozen=True)
class MarginalEstimate:
    sample: np.ndarray      # sorted
    weights: np.ndarray     # aligned with sample, sum 1
    bandwidth: float
    knots: np.ndarray       # cdf values at the sample points

    @classmethod
    def from_sample(cls, values: np.ndarray, weights: np.ndarray | None = None, bandwidth: float | None = None):
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            raise DimensionError("marginal estimate needs a nonempty sample")
        if not np.all(np.isfinite(values)):
            raise NumericalError("marginal sample contains non-finite values")
        n = values.size
        w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float).ravel() / np.sum(weights)
        order = np.argsort(values, kind="stable")
        sample, w = values[order], w[order]
        if np.allclose(w, 1.0 / n, rtol=1e-9, atol=0.0):
            knots = np.arange(1, n + 1) / (n + 1)
        else:
            knots = np.cumsum(w) * n / (n + 1)
        if bandwidth is None:
            bandwidth = silverman_bandwidth(sample, w) if n > 1 else 1.0
        for arr in (sample, w, knots):
            arr.setflags(write=False)
        return cls(sample, w, float(bandwidth), knots)

    @property
    def n(self) -> int:
        return self.sample.size

    @property
    def cdf_bounds(self) -> tuple[float, float]:
        return 1.0 / (self.n + 1), self.n / (self.n + 1)

    def cdf(self, x: np.ndarray) -> np.ndarray:
        return np.interp(x, self.sample, self.knots)

    def quantile(self, u: np.ndarray) -> np.ndarray:
        lo, hi = self.cdf_bounds
        return np.interp(np.clip(u, lo, hi), self.knots, self.sample)

    def normal_score(self, x: np.ndarray) -> np.ndarray:
        """η = Φ⁻¹(G(x)) with G clamped to [1/(n'+1), n'/(n'+1)]."""
        lo, hi = self.cdf_bounds
        return ndtri(np.clip(self.cdf(x), lo, hi))

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty(flat.size)
        step = max(1, _KDE_CHUNK // self.n)
        for start in range(0, flat.size, step):
            block = flat[start:start + step]
            out[start:start + step] = gaussian_kernel(block[:, None] - self.sample[None, :], self.bandwidth) @ self.weights
        return out.reshape(x.shape)

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def mean(self) -> float:
        return float(self.weights @ self.sample)

    def iqr(self) -> float:
        return float(self.quantile(0.75) - self.quantile(0.25))


@dataclass(frozen=True)
class NormalMarginal:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DimensionError(f"normal marginal needs sigma > 0, got {self.sigma}")

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    def quantile(self, u):
        return self.mu + self.sigma * ndtri(np.asarray(u, dtype=float))

    def normal_score(self, x):
        return (np.asarray(x, dtype=float) - self.mu) / self.sigma

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def logpdf(self, x):
        z = self.normal_score(x)
        return -0.5 * z ** 2 - np.log(self.sigma * _SQRT_2PI)

    def mean(self) -> float:
        return float(self.mu)

    def iqr(self) -> float:
        return float(2 * 0.6744897501960817 * self.sigma)
