"""
Bivariate normal orthant probabilities and their inversion in ρ.

    P(Z_i > t_i, Z_j > t_j) = Φ₂(-t_i, -t_j; ρ)
    Φ₂(h, k; ρ) = Φ(h)Φ(k) + (1/2π) ∫_0^{asin ρ} exp{-(h² - 2hk sin θ + k²) / (2 cos² θ)} dθ

The integral is the usual ∫_0^ρ φ₂(h, k; r) dr after r = sin θ, which
removes the endpoint singularity at |ρ| = 1.
"""

import logging

import numpy as np
from scipy import integrate, optimize
from scipy.special import ndtr, ndtri

from core.errors import DimensionError

logger = logging.getLogger(__name__)

RHO_EDGE = 1e-9
PROB_TOL = 1e-8


def bvn_cdf(h: float, k: float, rho: float) -> float:
    """Φ₂(h, k; ρ) for the standard bivariate normal."""
    if not -1.0 <= rho <= 1.0:
        raise DimensionError(f"correlation must lie in [-1, 1], got {rho}")
    if h == -np.inf or k == -np.inf:
        return 0.0
    if h == np.inf:
        return float(ndtr(k))
    if k == np.inf:
        return float(ndtr(h))
    if rho == 1.0:
        return float(ndtr(min(h, k)))
    if rho == -1.0:
        return float(max(0.0, ndtr(h) - ndtr(-k)))
    if rho == 0.0:
        return float(ndtr(h) * ndtr(k))

    def integrand(theta: float) -> float:
        c = np.cos(theta)
        return np.exp(-(h * h - 2.0 * h * k * np.sin(theta) + k * k) / (2.0 * c * c))

    value, _ = integrate.quad(integrand, 0.0, np.arcsin(rho), epsabs=1e-13, epsrel=1e-11, limit=200)
    return float(np.clip(ndtr(h) * ndtr(k) + value / (2.0 * np.pi), 0.0, 1.0))


def bvn_upper_orthant(t_i: float, t_j: float, rho: float) -> float:
    """P(Z_i > t_i, Z_j > t_j) for standard normals with correlation ρ."""
    return bvn_cdf(-float(t_i), -float(t_j), float(rho))


def attainable_range(p_i: float, p_j: float) -> tuple[float, float]:
    """Upper-orthant probability at ρ = -1 and ρ = +1 (the Fréchet bounds)."""
    t_i, t_j = ndtri(p_i), ndtri(p_j)
    return bvn_upper_orthant(t_i, t_j, -1.0), bvn_upper_orthant(t_i, t_j, 1.0)


def solve_lambda(p_i: float, p_j: float, joint11: float) -> tuple[float, bool]:
    """Latent correlation matching P(γ_i = 1, γ_j = 1) = joint11; second value flags a clamp."""
    for name, val in (("p_i", p_i), ("p_j", p_j)):
        if not 0.0 < val < 1.0:
            raise DimensionError(f"{name} must lie in (0, 1), got {val}")
    t_i, t_j = float(ndtri(p_i)), float(ndtri(p_j))
    lo_rho, hi_rho = -1.0 + RHO_EDGE, 1.0 - RHO_EDGE
    lower, upper = attainable_range(p_i, p_j)

    clamped = False
    if joint11 <= lower:
        logger.warning("joint frequency %.6g below attainable %.6g; clamped", joint11, lower)
        joint11, clamped = lower + RHO_EDGE, True
    elif joint11 >= upper:
        logger.warning("joint frequency %.6g above attainable %.6g; clamped", joint11, upper)
        joint11, clamped = upper - RHO_EDGE, True

    def excess(rho: float) -> float:
        return bvn_upper_orthant(t_i, t_j, rho) - joint11

    f_lo, f_hi = excess(lo_rho), excess(hi_rho)
    if f_lo >= 0.0:
        return lo_rho, clamped
    if f_hi <= 0.0:
        return hi_rho, clamped
    # orthant probability is increasing in ρ, so the root is unique
    rho = optimize.bisect(excess, lo_rho, hi_rho, xtol=1e-12, maxiter=200)
    return float(rho), clamped


def solve_lambda_ij(p_i: float, p_j: float, joint11: float) -> float:
    return solve_lambda(p_i, p_j, joint11)[0]
