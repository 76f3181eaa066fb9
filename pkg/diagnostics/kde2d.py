"""Weighted bivariate KDE and the bivariate copula density, both on a grid."""

import numpy as np

from copula.density import CopulaPosterior, copula_log_density
from copula.marginals import gaussian_kernel, silverman_bandwidth
from core.errors import DimensionError
from core.samples import WeightedSampleSet
from diagnostics.grid import GridDensity2D, GridSpec

MIN_KDE_POINTS = 10
_CHUNK = 20_000


def kde2d(x: np.ndarray, y: np.ndarray, grid: GridSpec, weights: np.ndarray | None = None) -> GridDensity2D:
    """Product Gaussian kernel, Silverman bandwidth per axis (effective n for weights)."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise DimensionError(f"KDE columns have lengths {x.size} and {y.size}")
    if x.size < MIN_KDE_POINTS:
        raise DimensionError(f"KDE needs at least {MIN_KDE_POINTS} points, got {x.size}")
    w = np.full(x.size, 1.0 / x.size) if weights is None else np.asarray(weights, dtype=float) / np.sum(weights)
    hx, hy = silverman_bandwidth(x, w), silverman_bandwidth(y, w)

    values = np.zeros((grid.nx, grid.ny))
    gx, gy = grid.x, grid.y
    for start in range(0, x.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        kx = gaussian_kernel(gx[:, None] - x[None, sl], hx)
        ky = gaussian_kernel(gy[:, None] - y[None, sl], hy)
        values += (kx * w[None, sl]) @ ky.T
    return GridDensity2D.from_values(grid, values)


def kde2d_sample(sample: WeightedSampleSet, grid: GridSpec, columns: tuple[int, int] = (0, 1)) -> GridDensity2D:
    i, j = columns
    return kde2d(sample.params[:, i], sample.params[:, j], grid, sample.weights)


def copula_bivariate_grid(
    post: CopulaPosterior, pair: tuple[int, int], grid: GridSpec, normalize: bool = True
) -> GridDensity2D:
    """Meta-Gaussian density of the margins at positions `pair`, tabulated on the grid."""
    sub = post.marginalize(pair)
    xx, yy = grid.mesh()
    logd = copula_log_density(sub, np.column_stack([xx.ravel(), yy.ravel()]))
    return GridDensity2D.from_values(grid, np.exp(logd).reshape(xx.shape), normalize)
