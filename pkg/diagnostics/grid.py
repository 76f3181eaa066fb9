"""Uniform 2-D grids and the normalized densities tabulated on them."""

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from core.errors import DimensionError, NumericalError


@dataclass(frozen=True)
class GridSpec:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    nx: int = 200
    ny: int = 200

    def __post_init__(self):
        if not (self.x_hi > self.x_lo and self.y_hi > self.y_lo):
            raise DimensionError(f"empty grid range {self}")
        if self.nx < 2 or self.ny < 2:
            raise DimensionError("grid needs at least 2 points per axis")

    @classmethod
    def around(cls, mean: tuple[float, float], sd: tuple[float, float], width: float = 6.0, n: int = 200) -> "GridSpec":
        """mean ± width·sd on each axis."""
        return cls(mean[0] - width * sd[0], mean[0] + width * sd[0], mean[1] - width * sd[1], mean[1] + width * sd[1], n, n)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_lo, self.y_hi, self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")


def grid_integral(x: np.ndarray, y: np.ndarray, values: np.ndarray) -> float:
    return float(trapezoid(trapezoid(values, y, axis=1), x))


@dataclass(frozen=True)
class GridDensity2D:
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray       # shape (len(x), len(y))
    normalizer: float = 1.0  # integral before normalization

    @classmethod
    def from_values(cls, grid: GridSpec, values: np.ndarray, normalize: bool = True) -> "GridDensity2D":
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.nx, grid.ny):
            raise DimensionError(f"grid values have shape {values.shape}, expected ({grid.nx}, {grid.ny})")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise NumericalError("grid density must be finite and nonnegative")
        total = grid_integral(grid.x, grid.y, values)
        if normalize:
            if not total > 0:
                raise NumericalError("grid density integrates to zero")
            values = values / total
        return cls(grid.x, grid.y, values, total)

    def integral(self) -> float:
        return grid_integral(self.x, self.y, self.values)

    def same_grid(self, other: "GridDensity2D") -> bool:
        return (
            self.values.shape == other.values.shape
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
        )

    def to_frame(self, method: str) -> pd.DataFrame:
        """Long format (x, y, density, method) for contour plotting."""
        xx, yy = np.meshgrid(self.x, self.y, indexing="ij")
        return pd.DataFrame(
            {"x": xx.ravel(), "y": yy.ravel(), "density": self.values.ravel(), "method": method}
        )
