"""
Twisted-normal toy model.

Prior: θ ~ N_p(0, diag(100, 1, ..., 1)), then θ₂ → θ₂ + bθ₁² - 100b.
Data:  y ~ N_p(θ, σ₀² I), summaries s = y.

Only (θ₁, θ₂) are dependent a posteriori. Given θ₁ the posterior of θ₂ is
normal, and θ₃..θ_p are independent conjugate normals, so every bivariate
posterior margin reduces to 1-D quadrature on a fine θ₁ axis.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from abc_engine.reference_table import SimulatorModel
from core.errors import DimensionError
from core.samples import SummaryMap
from diagnostics.grid import GridDensity2D, GridSpec

_THETA1_HALF_SPAN = 50.0
_THETA1_POINTS = 100_001


@dataclass(frozen=True)
class TwistedNormalModel:
    p: int
    b: float = 0.1
    sigma0: float = 1.0
    y_obs: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.p < 2:
            raise DimensionError(f"twisted-normal model needs p >= 2, got {self.p}")
        if not self.sigma0 > 0:
            raise DimensionError(f"sigma0 must be positive, got {self.sigma0}")
        if self.y_obs is None:
            y = np.zeros(self.p)
            y[0] = 10.0
        else:
            y = np.asarray(self.y_obs, dtype=float).ravel()
            if y.size != self.p:
                raise DimensionError(f"y_obs has length {y.size}, model has p={self.p}")
        y = y.copy()
        y.setflags(write=False)
        object.__setattr__(self, "y_obs", y)

    @property
    def prior_sd(self) -> np.ndarray:
        sd = np.ones(self.p)
        sd[0] = 10.0
        return sd

    def describe(self) -> dict:
        return {"p": self.p, "b": self.b, "sigma0": self.sigma0, "y_obs": self.y_obs.tolist()}


def _check_theta(model: TwistedNormalModel, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != model.p:
        raise DimensionError(f"θ has {theta.shape[-1]} entries, model has p={model.p}")
    return theta


# ---------------------------------------------------------------------------
# Prior and simulator
# ---------------------------------------------------------------------------

def twisted_prior_sample_batch(model: TwistedNormalModel, n: int, gen: np.random.Generator) -> np.ndarray:
    theta = gen.standard_normal((n, model.p)) * model.prior_sd
    theta[:, 1] += model.b * theta[:, 0] ** 2 - 100.0 * model.b
    return theta


def twisted_prior_sample(model: TwistedNormalModel, gen: np.random.Generator) -> np.ndarray:
    return twisted_prior_sample_batch(model, 1, gen)[0]


def twisted_log_prior_density(model: TwistedNormalModel, theta: np.ndarray) -> float:
    """-θ₁²/200 - (θ₂ - bθ₁² + 100b)²/2 - Σ_{j>=3} θ_j²/2, unnormalized."""
    theta = _check_theta(model, theta).ravel()
    t1, t2 = theta[0], theta[1]
    return float(-t1 ** 2 / 200.0 - (t2 - model.b * t1 ** 2 + 100.0 * model.b) ** 2 / 2.0 - np.sum(theta[2:] ** 2) / 2.0)


def toy_simulate_batch(model: TwistedNormalModel, theta: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    theta = _check_theta(model, np.atleast_2d(theta))
    return theta + model.sigma0 * gen.standard_normal(theta.shape)


def toy_simulate(model: TwistedNormalModel, theta: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    return toy_simulate_batch(model, theta, gen)[0]


def toy_summary_map(p: int) -> SummaryMap:
    """s_(i) = {i}, except s_(2) = {1, 2}."""
    univariate = [[i] for i in range(p)]
    univariate[1] = [0, 1]
    return SummaryMap.from_univariate(univariate)


def toy_simulator_model(model: TwistedNormalModel) -> SimulatorModel:
    return SimulatorModel(
        name=f"toy_p{model.p}",
        p=model.p,
        q=model.p,
        prior_sample=lambda gen: twisted_prior_sample(model, gen),
        simulate=lambda theta, gen: toy_simulate(model, theta, gen),
        log_prior=lambda theta: twisted_log_prior_density(model, theta),
        prior_sample_batch=lambda n, gen: twisted_prior_sample_batch(model, n, gen),
        simulate_batch=lambda theta, gen: toy_simulate_batch(model, theta, gen),
        config=model.describe(),
    )


# ---------------------------------------------------------------------------
# Exact posterior margins
# ---------------------------------------------------------------------------

def _normal_pdf(x: np.ndarray, mean: float, var: float) -> np.ndarray:
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def _conditional_var(model: TwistedNormalModel) -> float:
    s2 = model.sigma0 ** 2
    return s2 / (1.0 + s2)


def _theta2_conditional_mean(model: TwistedNormalModel, theta1: np.ndarray) -> np.ndarray:
    s2 = model.sigma0 ** 2
    prior_mean = model.b * theta1 ** 2 - 100.0 * model.b
    return (s2 * prior_mean + model.y_obs[1]) / (1.0 + s2)


def _theta1_log_kernel(model: TwistedNormalModel, theta1: np.ndarray) -> np.ndarray:
    """log π(θ₁ | y) up to a constant, θ₂ integrated out analytically."""
    s2 = model.sigma0 ** 2
    y1, y2 = model.y_obs[0], model.y_obs[1]
    shift = model.b * theta1 ** 2 - 100.0 * model.b
    return -theta1 ** 2 / 200.0 - (y1 - theta1) ** 2 / (2.0 * s2) - (y2 - shift) ** 2 / (2.0 * (1.0 + s2))


def _theta1_axis(model: TwistedNormalModel) -> tuple[np.ndarray, np.ndarray]:
    y1 = model.y_obs[0]
    x = np.linspace(min(0.0, y1) - _THETA1_HALF_SPAN, max(0.0, y1) + _THETA1_HALF_SPAN, _THETA1_POINTS)
    logk = _theta1_log_kernel(model, x)
    w = np.exp(logk - logk.max())
    keep = w > 1e-16
    x, w = x[keep], w[keep]
    return x, w / trapezoid(w, x)


def _axis_density(model: TwistedNormalModel, i: int, x: np.ndarray) -> np.ndarray:
    """Unnormalized posterior density of θ_i on the points x (i is 0-based)."""
    v = _conditional_var(model)
    if i == 0:
        logk = _theta1_log_kernel(model, x)
        return np.exp(logk - logk.max())
    if i == 1:
        t1, w1 = _theta1_axis(model)
        m = _theta2_conditional_mean(model, t1)
        return trapezoid(_normal_pdf(x[:, None], m[None, :], v) * w1, t1, axis=1)
    return _normal_pdf(x, model.y_obs[i] / (1.0 + model.sigma0 ** 2), v)


def toy_posterior_moments(model: TwistedNormalModel, i: int) -> tuple[float, float]:
    """Exact posterior mean and sd of θ_i (0-based)."""
    v = _conditional_var(model)
    if i >= 2:
        return float(model.y_obs[i] / (1.0 + model.sigma0 ** 2)), float(np.sqrt(v))
    t1, w1 = _theta1_axis(model)
    # θ₂ | θ₁ is normal with mean m(θ₁) and variance v
    m = t1 if i == 0 else _theta2_conditional_mean(model, t1)
    extra = 0.0 if i == 0 else v
    mean = float(trapezoid(w1 * m, t1))
    return mean, float(np.sqrt(extra + max(trapezoid(w1 * m ** 2, t1) - mean ** 2, 0.0)))


def toy_default_grid(model: TwistedNormalModel, pair: tuple[int, int], n: int = 200) -> GridSpec:
    (mi, si), (mj, sj) = (toy_posterior_moments(model, k) for k in pair)
    return GridSpec.around((mi, mj), (si, sj), 6.0, n)


def toy_posterior_grid(model: TwistedNormalModel, pair: tuple[int, int], grid: GridSpec | None = None) -> GridDensity2D:
    """Exact bivariate posterior of (θ_i, θ_j), normalized on the grid (indices 0-based)."""
    i, j = (int(k) for k in pair)
    if i == j or not (0 <= i < model.p and 0 <= j < model.p):
        raise DimensionError(f"invalid parameter pair ({i + 1}, {j + 1}) for p={model.p}")
    grid = grid or toy_default_grid(model, (i, j))
    xx, yy = grid.mesh()

    if {i, j} == {0, 1}:
        t1, t2 = (xx, yy) if i == 0 else (yy, xx)
        logd = _theta1_log_kernel(model, t1) - 0.5 * (t2 - _theta2_conditional_mean(model, t1)) ** 2 / _conditional_var(model)
        values = np.exp(logd - logd.max())
    else:
        values = np.outer(_axis_density(model, i, grid.x), _axis_density(model, j, grid.y))
    return GridDensity2D.from_values(grid, values)
