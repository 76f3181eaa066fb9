import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import ndtr, ndtri

from abc_engine.reference_table import build_reference_table
from core.errors import DimensionError
from core.rng import SeededRng
from models.gk import (
    GkParams,
    GkPriorBox,
    MultiGkModel,
    correlation_from_vector,
    gk_log_prior,
    gk_quantile,
    gk_simulator_model,
    gk_summaries,
    gk_summary_map,
    multigk_simulate,
    multigk_summary_vector,
    normal_scores_correlation,
    parameter_names,
    wishart_correlation_sample,
)
from models.twisted_normal import (
    TwistedNormalModel,
    toy_default_grid,
    toy_posterior_grid,
    toy_posterior_moments,
    toy_simulate,
    toy_summary_map,
    twisted_log_prior_density,
    twisted_prior_sample_batch,
)


# --- twisted normal ---

def test_untwisted_prior_variance(gen):
    draws = twisted_prior_sample_batch(TwistedNormalModel(3, b=0.0), 100_000, gen)
    assert draws[:, 0].var() == pytest.approx(100.0, rel=0.02)
    assert draws[:, 2].var() == pytest.approx(1.0, rel=0.02)


def test_twist_keeps_theta2_centred(gen):
    draws = twisted_prior_sample_batch(TwistedNormalModel(2), 1_000_000, gen)
    # sd of θ₂ is about √201, so allow for its Monte Carlo error
    assert abs(draws[:, 1].mean()) < 4 * np.sqrt(201.0 / 1_000_000)


def test_inverse_twist_recovers_unit_variance(gen):
    model = TwistedNormalModel(2)
    draws = twisted_prior_sample_batch(model, 200_000, gen)
    untwisted = draws[:, 1] - model.b * draws[:, 0] ** 2 + 100.0 * model.b
    assert untwisted.var() == pytest.approx(1.0, rel=0.02)


def test_log_prior_hand_value():
    model = TwistedNormalModel(3)
    assert twisted_log_prior_density(model, np.zeros(3)) == pytest.approx(-50.0, abs=1e-12)
    theta = np.array([3.0, 0.4, -0.2])
    flipped = theta * np.array([-1.0, 1.0, 1.0])
    assert twisted_log_prior_density(model, theta) == twisted_log_prior_density(model, flipped)


def test_simulator_noise_covariance():
    model = TwistedNormalModel(2, sigma0=0.5)
    gen = np.random.default_rng(1)
    theta = np.array([1.0, -2.0])
    draws = np.array([toy_simulate(model, theta, gen) for _ in range(20_000)])
    np.testing.assert_allclose(np.cov(draws.T), 0.25 * np.eye(2), atol=0.01)
    np.testing.assert_allclose(draws.mean(axis=0), theta, atol=0.02)


def test_toy_summary_map():
    smap = toy_summary_map(4)
    assert smap.univariate == ((0,), (0, 1), (2,), (3,))
    assert smap.pair(0, 1) == (0, 1)


def test_toy_model_validation():
    with pytest.raises(DimensionError):
        TwistedNormalModel(1)
    with pytest.raises(DimensionError):
        TwistedNormalModel(3, y_obs=np.zeros(2))


def test_posterior_grid_is_normalized(toy_p3):
    grid = toy_posterior_grid(toy_p3, (0, 1))
    assert grid.integral() == pytest.approx(1.0, abs=1e-6)


def test_trailing_pair_is_conjugate_product():
    model = TwistedNormalModel(4, y_obs=np.array([10.0, 0.0, 1.0, -2.0]))
    grid = toy_posterior_grid(model, (2, 3))
    # N(y_j / 2, 1/2) for each trailing coordinate
    expected = np.outer(stats.norm(0.5, np.sqrt(0.5)).pdf(grid.x), stats.norm(-1.0, np.sqrt(0.5)).pdf(grid.y))
    expected /= np.sum(expected) * (grid.x[1] - grid.x[0]) * (grid.y[1] - grid.y[0])
    np.testing.assert_allclose(grid.values, expected, rtol=1e-3, atol=1e-8)


def test_banana_mode_shrinks_theta1(toy_p3):
    mean1, sd1 = toy_posterior_moments(toy_p3, 0)
    assert 0.0 < mean1 < 10.0
    grid = toy_posterior_grid(toy_p3, (0, 1), toy_default_grid(toy_p3, (0, 1), n=120))
    ix, _ = np.unravel_index(np.argmax(grid.values), grid.values.shape)
    assert abs(grid.x[ix] - mean1) < 2 * sd1


def test_trailing_moments_are_conjugate(toy_p3):
    mean, sd = toy_posterior_moments(toy_p3, 2)
    assert mean == 0.0
    assert sd == pytest.approx(np.sqrt(0.5))


# --- g-and-k quantile function ---

def test_median_is_location():
    assert gk_quantile(0.5, GkParams(1.3, 2.0, 0.7, 0.4)) == pytest.approx(1.3, abs=1e-14)


def test_g_and_k_zero_is_normal():
    u = np.array([0.1, 0.4, 0.9])
    np.testing.assert_allclose(gk_quantile(u, GkParams(2.0, 3.0, 0.0, 0.0)), 2.0 + 3.0 * ndtri(u), atol=1e-12)


def test_quantile_matches_exponential_form():
    z = float(ndtri(0.75))
    expected = (1.0 + 0.8 * (1.0 - math.exp(-2.0 * z)) / (1.0 + math.exp(-2.0 * z))) * (1.0 + z * z) ** 0.5 * z
    assert gk_quantile(0.75, GkParams(0.0, 1.0, 2.0, 0.5)) == pytest.approx(expected, abs=1e-12)


def test_quantile_location_scale_and_monotone():
    u = np.linspace(0.001, 0.999, 999)
    base = gk_quantile(u, GkParams(0.0, 1.0, -0.6, 0.3))
    np.testing.assert_allclose(gk_quantile(u, GkParams(-1.0, 2.5, -0.6, 0.3)), -1.0 + 2.5 * base, atol=1e-12)
    assert np.all(np.diff(base) > 0)


def test_gk_parameter_validation():
    with pytest.raises(DimensionError):
        GkParams(0.0, 0.0, 0.0, 0.0)
    with pytest.raises(DimensionError):
        GkParams(0.0, 1.0, 0.0, -0.6)
    with pytest.raises(DimensionError):
        gk_quantile(1.0, GkParams(0.0, 1.0, 0.0, 0.0))


# --- summaries ---

def test_summaries_of_one_to_eight():
    np.testing.assert_allclose(gk_summaries(np.arange(1.0, 9.0)), [4.0, 4.0, 0.0, 1.0], atol=1e-15)


def test_symmetric_sample_has_zero_skew(gen):
    half = gen.exponential(size=500)
    data = np.concatenate([3.0 + half, 3.0 - half, [3.0]])
    assert gk_summaries(data)[2] == pytest.approx(0.0, abs=1e-12)


def test_normal_quartiles(gen):
    s = gk_summaries(gen.standard_normal(100_000))
    assert s[0] == pytest.approx(0.0, abs=0.02)
    assert s[1] == pytest.approx(2 * 0.6744897501960817, abs=0.02)


def test_summaries_reject_degenerate_data():
    with pytest.raises(DimensionError):
        gk_summaries(np.arange(5.0))
    with pytest.raises(ValueError):
        gk_summaries(np.ones(20))


def test_normal_scores_correlation(gen):
    a = gen.normal(size=200)
    assert normal_scores_correlation(a, a) == pytest.approx(1.0, abs=1e-12)
    assert normal_scores_correlation(a, np.exp(a)) == pytest.approx(1.0, abs=1e-12)
    draws = gen.multivariate_normal([0.0, 0.0], [[1.0, 0.6], [0.6, 1.0]], size=10_000)
    assert normal_scores_correlation(draws[:, 0], draws[:, 1]) == pytest.approx(0.6, abs=0.03)


def test_batch_summaries_match_single(gen):
    stack = gen.normal(size=(4, 100, 3))
    batch = multigk_summary_vector(stack)
    for b in range(4):
        single = multigk_summary_vector(stack[b])
        np.testing.assert_allclose(batch[b], single, atol=1e-12)
        np.testing.assert_allclose(single[:4], gk_summaries(stack[b][:, 0]), atol=1e-15)
        assert single[12] == pytest.approx(normal_scores_correlation(stack[b][:, 0], stack[b][:, 1]), abs=1e-12)


# --- multivariate model ---

def test_sixteen_margins_have_184_parameters():
    model = MultiGkModel(16, tuple(GkParams(0.0, 1.0, 0.0, 0.0) for _ in range(16)))
    assert model.p == 184
    assert len(parameter_names(16)) == 184
    assert gk_summary_map(16).p == 184


def test_sixteen_margin_reference_table_has_184_columns():
    table = build_reference_table(gk_simulator_model(16, n_obs=60), 4, SeededRng(21, ("gk16",)))
    assert (table.p, table.q) == (184, 184)
    assert np.all(np.isfinite(table.summaries))


def test_parameter_vector_round_trip():
    v = correlation_from_vector(np.array([0.2, -0.1, 0.3]), 3)
    model = MultiGkModel(3, (GkParams(0.1, 1.0, 0.2, 0.1), GkParams(0.0, 2.0, -0.1, 0.0), GkParams(1.0, 0.5, 0.0, 0.3)), v)
    again = MultiGkModel.from_vector(model.to_vector(), 3)
    assert again.margins == model.margins
    np.testing.assert_array_equal(again.V, model.V)
    assert parameter_names(3)[:4] == ["A1", "B1", "g1", "k1"]
    assert parameter_names(3)[-1] == "nu23"


def test_single_margin_is_univariate_gk(gen):
    margin = GkParams(0.0, 1.0, 0.5, 0.2)
    data = multigk_simulate(MultiGkModel(1, (margin,), n_obs=10_000), gen)[:, 0]
    zs = np.linspace(-6.0, 6.0, 20_001)
    xs = gk_quantile(ndtr(zs), margin)
    assert stats.kstest(data, lambda x: ndtr(np.interp(x, xs, zs))).statistic < 0.02


def test_normal_margins_reproduce_v(gen):
    v = np.array([[1.0, 0.5, -0.2], [0.5, 1.0, 0.1], [-0.2, 0.1, 1.0]])
    model = MultiGkModel(3, tuple(GkParams(0.0, 1.0, 0.0, 0.0) for _ in range(3)), v, n_obs=10_000)
    data = multigk_simulate(model, gen)
    np.testing.assert_allclose(np.corrcoef(data.T), v, atol=0.03)


def test_model_validation():
    with pytest.raises(DimensionError):
        MultiGkModel(2, (GkParams(0.0, 1.0, 0.0, 0.0),))
    with pytest.raises(DimensionError):
        MultiGkModel.from_vector(np.zeros(5), 2)


def test_wishart_correlations(gen):
    draws = wishart_correlation_sample(2, gen, size=10_000)
    np.testing.assert_array_equal(draws[:, 0, 0], 1.0)
    np.testing.assert_array_equal(draws[:, 1, 1], 1.0)
    assert abs(draws[:, 0, 1].mean()) < 0.02
    for mat in wishart_correlation_sample(4, gen, size=200):
        np.linalg.cholesky(mat)


def test_prior_box_support():
    box = GkPriorBox()
    assert gk_log_prior(np.array([0.0, 0.02, 0.1, 0.1]), 1, box) == 0.0
    assert gk_log_prior(np.array([0.0, 0.2, 0.1, 0.1]), 1, box) == -np.inf
    assert box.log_density([0.01, 0.3], ["B", "k"]) == 0.0


def test_gk_reference_table_is_finite():
    table = build_reference_table(gk_simulator_model(2, n_obs=200), 300, SeededRng(4, ("gk",)))
    assert table.p == table.q == 9
    assert np.all(np.isfinite(table.summaries))
    assert np.all((table.params[:, 1] > 0) & (table.params[:, 1] < 0.05))
