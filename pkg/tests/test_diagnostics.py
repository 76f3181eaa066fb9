import numpy as np
import pytest
from scipy import stats

from copula.density import CopulaPosterior
from copula.marginals import NormalMarginal
from core.errors import ConfigError, DimensionError, NumericalError
from core.samples import WeightedSampleSet
from diagnostics.grid import GridDensity2D, GridSpec
from diagnostics.kde2d import copula_bivariate_grid, kde2d, kde2d_sample
from diagnostics.kl import copula_grid_kl_diagnostic, kl_grid
from diagnostics.replicate import METHODS, replicate_kl_methods
from models.twisted_normal import TwistedNormalModel

GRID = GridSpec(-5.0, 5.0, -5.0, 5.0, 121, 121)


def _normal_grid(mean, cov, grid=GRID):
    xx, yy = grid.mesh()
    values = stats.multivariate_normal(mean, cov).pdf(np.dstack([xx, yy]))
    return GridDensity2D.from_values(grid, values)


# --- grids ---

def test_grid_integral_of_normal():
    dens = _normal_grid([0.0, 0.0], np.eye(2))
    assert dens.normalizer == pytest.approx(1.0, abs=1e-4)
    assert dens.integral() == pytest.approx(1.0, abs=1e-12)


def test_grid_validation():
    with pytest.raises(DimensionError):
        GridSpec(1.0, 0.0, 0.0, 1.0)
    with pytest.raises(DimensionError):
        GridDensity2D.from_values(GRID, np.ones((3, 3)))
    with pytest.raises(NumericalError):
        GridDensity2D.from_values(GRID, np.zeros((121, 121)))


def test_grid_around():
    grid = GridSpec.around((1.0, -2.0), (0.5, 2.0), width=4.0, n=50)
    assert (grid.x_lo, grid.x_hi, grid.y_lo, grid.y_hi) == (-1.0, 3.0, -10.0, 6.0)
    assert grid.x.size == 50


def test_frame_is_long_format():
    frame = _normal_grid([0.0, 0.0], np.eye(2)).to_frame("truth")
    assert list(frame.columns) == ["x", "y", "density", "method"]
    assert len(frame) == 121 * 121
    assert set(frame["method"]) == {"truth"}


# --- KL ---

def test_kl_of_identical_densities_is_zero():
    dens = _normal_grid([0.3, -0.2], [[1.0, 0.4], [0.4, 1.0]])
    assert kl_grid(dens, dens) == 0.0


def test_kl_matches_closed_form():
    p = _normal_grid([0.0, 0.0], np.eye(2))
    q = _normal_grid([1.0, 0.0], np.eye(2))
    # KL(N(0, I) ‖ N(μ, I)) = |μ|² / 2
    assert kl_grid(p, q) == pytest.approx(0.5, abs=1e-3)
    assert kl_grid(q, p) >= 0.0


def test_kl_needs_a_common_grid():
    p = _normal_grid([0.0, 0.0], np.eye(2))
    q = _normal_grid([0.0, 0.0], np.eye(2), GridSpec(-4.0, 4.0, -4.0, 4.0, 121, 121))
    with pytest.raises(DimensionError):
        kl_grid(p, q)


# --- KDE ---

def test_kde_integrates_to_one(gen):
    draws = gen.multivariate_normal([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]], size=5000)
    dens = kde2d(draws[:, 0], draws[:, 1], GRID)
    assert dens.integral() == pytest.approx(1.0, abs=1e-12)
    truth = _normal_grid([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]])
    assert kl_grid(truth, dens) < 0.02


def test_kde_of_concentrated_sample_peaks_at_point(gen):
    x = 1.0 + 1e-3 * gen.standard_normal(200)
    y = -2.0 + 1e-3 * gen.standard_normal(200)
    grid = GridSpec(0.0, 2.0, -3.0, -1.0, 201, 201)
    dens = kde2d(x, y, grid)
    ix, iy = np.unravel_index(np.argmax(dens.values), dens.values.shape)
    assert grid.x[ix] == pytest.approx(1.0, abs=0.01)
    assert grid.y[iy] == pytest.approx(-2.0, abs=0.01)


def test_kde_weights_select_points(gen):
    x = np.concatenate([gen.normal(-2.0, 0.3, 500), gen.normal(2.0, 0.3, 500)])
    y = gen.normal(0.0, 0.3, 1000)
    weights = np.r_[np.ones(500), np.zeros(500)]
    sample = WeightedSampleSet(np.column_stack([x, y]), np.zeros((1000, 1)), weights)
    dens = kde2d_sample(sample, GRID)
    right = dens.values[GRID.x > 0.0]
    assert right.max() < 1e-6 * dens.values.max()


def test_kde_input_checks():
    with pytest.raises(DimensionError):
        kde2d(np.zeros(5), np.zeros(5), GRID)
    with pytest.raises(DimensionError):
        kde2d(np.zeros(20), np.zeros(21), GRID)


# --- copula grid ---

def test_copula_grid_with_normal_margins_is_bivariate_normal():
    lam = np.array([[1.0, 0.2, 0.6], [0.2, 1.0, -0.3], [0.6, -0.3, 1.0]])
    margins = (NormalMarginal(1.0, 2.0), NormalMarginal(0.0, 1.0), NormalMarginal(-1.0, 0.5))
    post = CopulaPosterior(margins, lam)
    grid = GridSpec(-7.0, 9.0, -3.5, 1.5, 80, 70)
    dens = copula_bivariate_grid(post, (0, 2), grid, normalize=False)
    xx, yy = grid.mesh()
    cov = [[4.0, 0.6 * 2.0 * 0.5], [0.6 * 2.0 * 0.5, 0.25]]
    expected = stats.multivariate_normal([1.0, -1.0], cov).pdf(np.dstack([xx, yy]))
    np.testing.assert_allclose(dens.values, expected, rtol=1e-9, atol=1e-300)


def test_independent_copula_grid_is_outer_product():
    margins = (NormalMarginal(0.0, 1.0), NormalMarginal(2.0, 3.0))
    post = CopulaPosterior(margins, np.eye(2))
    dens = copula_bivariate_grid(post, (0, 1), GRID, normalize=False)
    expected = np.outer(stats.norm(0.0, 1.0).pdf(GRID.x), stats.norm(2.0, 3.0).pdf(GRID.y))
    np.testing.assert_allclose(dens.values, expected, rtol=1e-9, atol=1e-300)


def test_copula_kl_diagnostic_is_small_for_matching_sample(gen):
    rho = 0.5
    post = CopulaPosterior((NormalMarginal(0.0, 1.0), NormalMarginal(0.0, 1.0)), np.array([[1.0, rho], [rho, 1.0]]))
    draws = gen.multivariate_normal([0.0, 0.0], [[1.0, rho], [rho, 1.0]], size=5000)
    kl = copula_grid_kl_diagnostic(post, WeightedSampleSet.equally_weighted(draws), (0, 1), GRID)
    assert 0.0 <= kl < 0.02
    with pytest.raises(DimensionError):
        copula_grid_kl_diagnostic(post, WeightedSampleSet.equally_weighted(gen.normal(size=(50, 3))), (0, 1), GRID)


# --- replicated experiment ---

def test_replicated_kl_is_deterministic():
    model = TwistedNormalModel(2)
    kwargs = dict(methods=("rejection", "copula"), N=4000, replicates=2, seed=3, quantile=0.05, threads=2)
    a = replicate_kl_methods(model, **kwargs)
    b = replicate_kl_methods(model, **{**kwargs, "threads": 1})
    assert a == b
    assert [row["method"] for row in a] == ["rejection", "copula"]
    assert all(row["mean_kl"] >= 0.0 and row["p"] == 2 for row in a)


def test_unknown_kl_method():
    with pytest.raises(ConfigError, match="unknown KL method"):
        replicate_kl_methods(TwistedNormalModel(2), ("kde",), 100, 1, 0, 0.1)
    assert "regression+marg" in METHODS


# --- desk-scale KL table ---

KL_DIMENSIONS = (2, 5, 10, 20, 50)
ORDERED_AT_50 = ("rejection", "regression", "regression+marg", "copula")


@pytest.fixture(scope="module")
def kl_table():
    """Mean KL per (p, method) at N = 2×10⁵ with 20 replicates."""
    table = {}
    for p in KL_DIMENSIONS:
        methods = ORDERED_AT_50 if p == 50 else ("rejection", "copula")
        rows = replicate_kl_methods(TwistedNormalModel(p), methods, 200_000, 20, seed=41, quantile=0.005, threads=8)
        table.update({(p, row["method"]): row for row in rows})
    return table


@pytest.mark.slow
def test_copula_kl_does_not_depend_on_dimension(kl_table):
    means = [kl_table[(p, "copula")]["mean_kl"] for p in (2, 5, 50)]
    assert 0.02 <= means[0] <= 0.12
    assert max(means) < 2.0 * min(means)


@pytest.mark.slow
def test_rejection_kl_grows_with_dimension(kl_table):
    means = [kl_table[(p, "rejection")]["mean_kl"] for p in KL_DIMENSIONS]
    assert all(a < b for a, b in zip(means, means[1:]))
    assert means[-1] >= 10.0 * kl_table[(50, "copula")]["mean_kl"]


@pytest.mark.slow
def test_adjustment_ordering_at_fifty_dimensions(kl_table):
    rows = [kl_table[(50, m)] for m in ORDERED_AT_50]
    for worse, better in zip(rows, rows[1:]):
        gap = worse["mean_kl"] - better["mean_kl"]
        assert gap > 3.0 * max(worse["se"], better["se"]), (worse["method"], better["method"])
