import logging

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import trapezoid

from abc_engine.reference_table import SimulatorModel, build_reference_table
from copula.correlation import assemble_correlation, normal_scores, pairwise_lambda, repair_correlation
from copula.density import CopulaPosterior, copula_log_density, copula_sample
from copula.fit import AdjustFlags, fit_copula, pair_sample
from copula.marginals import MarginalEstimate, NormalMarginal
from copula.mle import approx_mle
from copula.storage import FORMAT_VERSION, load_posterior, save_posterior
from core.distance import DistanceSpec
from core.errors import ConfigError, DimensionError, NumericalError
from core.rng import SeededRng
from core.samples import SummaryMap

# s = Aθ + e with θ ~ N(0, I), e ~ N(0, I): posterior covariance (I + AᵀA)⁻¹ = [[3, -1], [-1, 2]] / 5
_A = np.array([[1.0, 1.0], [0.0, 1.0]])
_LINEAR_RHO = -1.0 / np.sqrt(6.0)


def _linear_gaussian_model() -> SimulatorModel:
    return SimulatorModel(
        name="linear_gaussian",
        p=2,
        q=2,
        prior_sample=lambda g: g.normal(size=2),
        simulate=lambda th, g: _A @ th + g.normal(size=2),
        prior_sample_batch=lambda n, g: g.normal(size=(n, 2)),
        simulate_batch=lambda th, g: th @ _A.T + g.normal(size=th.shape),
    )


@pytest.fixture(scope="module")
def linear_table():
    return build_reference_table(_linear_gaussian_model(), 200_000, SeededRng(17, ("linear",)))


def _kde_posterior(gen, rho=0.5, n=2000):
    marginals = (
        MarginalEstimate.from_sample(gen.normal(1.0, 2.0, n)),
        MarginalEstimate.from_sample(gen.gamma(3.0, size=n)),
    )
    return CopulaPosterior(marginals, np.array([[1.0, rho], [rho, 1.0]]))


# --- normal scores and pairwise correlation ---

def test_normal_scores_hand_values():
    np.testing.assert_allclose(normal_scores(np.array([5.0, 1.0, 3.0])), [0.674490, -0.674490, 0.0], atol=1e-5)
    assert normal_scores(np.array([42.0]))[0] == 0.0


def test_normal_scores_sum_to_zero(gen):
    assert abs(normal_scores(gen.normal(size=999)).sum()) < 1e-12


def test_normal_scores_invariant_under_monotone_maps(gen):
    x = gen.normal(size=200)
    np.testing.assert_array_equal(normal_scores(x), normal_scores(np.exp(x)))
    np.testing.assert_array_equal(normal_scores(x), normal_scores(x ** 3 + 2.0))


def test_normal_scores_reject_empty():
    with pytest.raises(DimensionError):
        normal_scores(np.array([]))


def test_pairwise_lambda_comonotone_and_antimonotone(gen):
    x = gen.normal(size=50)
    assert pairwise_lambda(x, np.exp(x)) == pytest.approx(1.0, abs=1e-12)
    assert pairwise_lambda(x, -x) == pytest.approx(-1.0, abs=1e-12)


def test_pairwise_lambda_recovers_normal_correlation(gen):
    draws = gen.multivariate_normal([0.0, 0.0], [[1.0, 0.7], [0.7, 1.0]], size=10_000)
    lam = pairwise_lambda(draws[:, 0], draws[:, 1])
    assert lam == pytest.approx(0.7, abs=0.03)
    assert pairwise_lambda(draws[:, 1], draws[:, 0]) == lam
    assert pairwise_lambda(np.exp(draws[:, 0]), draws[:, 1] ** 3) == pytest.approx(lam, abs=1e-12)


def test_pairwise_lambda_needs_three_draws():
    with pytest.raises(DimensionError):
        pairwise_lambda(np.array([1.0, 2.0]), np.array([2.0, 1.0]))


# --- assembly and repair ---

def test_independent_pairs_give_identity():
    lam, log = assemble_correlation({(0, 1): 0.0, (0, 2): 0.0, (1, 2): 0.0}, 3)
    np.testing.assert_array_equal(lam, np.eye(3))
    assert not log.repaired


def test_positive_definite_input_unchanged():
    lam, log = assemble_correlation({(0, 1): 0.9, (0, 2): 0.9, (1, 2): 0.9}, 3)
    expected = np.full((3, 3), 0.9)
    np.fill_diagonal(expected, 1.0)
    np.testing.assert_allclose(lam, expected, atol=1e-15)
    assert not log.repaired


def test_indefinite_input_repaired(caplog):
    with caplog.at_level(logging.WARNING, logger="copula.correlation"):
        lam, log = assemble_correlation({(0, 1): 0.9, (0, 2): 0.9, (1, 2): -0.9}, 3)
    assert log.repaired
    assert log.min_eigenvalue_before < 0
    assert log.max_abs_change > 0
    np.testing.assert_allclose(np.diag(lam), 1.0, atol=1e-12)
    np.testing.assert_allclose(lam, lam.T, atol=0)
    assert np.linalg.eigvalsh(lam)[0] >= 1e-6
    np.linalg.cholesky(lam)
    assert "repaired" in caplog.text


def test_random_pairs_always_pass_cholesky(gen):
    for _ in range(50):
        p = int(gen.integers(3, 8))
        pairs = {(i, j): float(gen.uniform(-1, 1)) for i in range(p) for j in range(i + 1, p)}
        lam, _ = assemble_correlation(pairs, p)
        np.linalg.cholesky(lam)


def test_assembly_errors():
    with pytest.raises(DimensionError, match="missing"):
        assemble_correlation({(0, 1): 0.1}, 3)
    with pytest.raises(NumericalError):
        assemble_correlation({(0, 1): 1.5}, 2)


def test_repair_keeps_floor_argument():
    _, log = repair_correlation(np.array([[1.0, 0.999], [0.999, 1.0]]), floor=0.01)
    assert log.repaired and log.eigenvalue_floor == 0.01


# --- marginal estimates ---

def test_quantile_inverts_cdf_on_sample(gen):
    m = MarginalEstimate.from_sample(gen.normal(size=500))
    np.testing.assert_allclose(m.quantile(m.cdf(m.sample)), m.sample, atol=1e-9)
    assert np.all(np.diff(m.cdf(m.sample)) > 0)


def test_kde_integrates_to_one(gen):
    m = MarginalEstimate.from_sample(gen.gamma(2.0, size=1000))
    x = np.linspace(m.sample[0] - 8 * m.bandwidth, m.sample[-1] + 8 * m.bandwidth, 20_001)
    assert trapezoid(m.pdf(x), x) == pytest.approx(1.0, abs=1e-3)


def test_unequal_weights_use_cumulative_knots():
    m = MarginalEstimate.from_sample(np.array([3.0, 1.0, 2.0]), np.array([0.5, 0.25, 0.25]))
    np.testing.assert_allclose(m.knots, np.cumsum([0.25, 0.25, 0.5]) * 3 / 4)


# --- density ---

def test_identity_correlation_factorizes(gen):
    post = _kde_posterior(gen, rho=0.0)
    theta = np.column_stack([gen.normal(1.0, 2.0, 100), gen.gamma(3.0, size=100)])
    np.testing.assert_allclose(
        copula_log_density(post, theta), post.marginal_logpdf(theta).sum(axis=1), atol=1e-12
    )


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_normal_marginals_give_multivariate_normal(seed):
    gen = np.random.default_rng(seed)
    a = gen.normal(size=(2, 2))
    cov = a @ a.T + 0.2 * np.eye(2)
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    mu = gen.normal(size=2)
    post = CopulaPosterior((NormalMarginal(mu[0], sd[0]), NormalMarginal(mu[1], sd[1])), corr)

    xs = [np.linspace(mu[k] - 3 * sd[k], mu[k] + 3 * sd[k], 10) for k in range(2)]
    pts = np.array([[x, y] for x in xs[0] for y in xs[1]])
    expected = stats.multivariate_normal(mu, np.outer(sd, sd) * corr).logpdf(pts)
    np.testing.assert_allclose(copula_log_density(post, pts), expected, atol=1e-10)


def test_fitted_density_integrates_to_one(gen):
    post = _kde_posterior(gen)
    axes = []
    for m in post.marginals:
        mean, sd = m.mean(), float(np.sqrt(m.weights @ (m.sample - m.mean()) ** 2))
        axes.append(np.linspace(mean - 6 * sd, mean + 6 * sd, 241))
    xx, yy = np.meshgrid(*axes, indexing="ij")
    dens = np.exp(copula_log_density(post, np.column_stack([xx.ravel(), yy.ravel()]))).reshape(xx.shape)
    assert trapezoid(trapezoid(dens, axes[1], axis=1), axes[0]) == pytest.approx(1.0, abs=0.01)


def test_density_rejects_bad_points(gen):
    post = _kde_posterior(gen)
    with pytest.raises(DimensionError):
        copula_log_density(post, np.zeros(3))
    with pytest.raises(NumericalError):
        copula_log_density(post, np.array([np.nan, 1.0]))
    assert isinstance(copula_log_density(post, np.array([1.0, 3.0])), float)


def test_posterior_rejects_bad_lambda():
    margs = (NormalMarginal(0.0, 1.0), NormalMarginal(0.0, 1.0))
    with pytest.raises(NumericalError):
        CopulaPosterior(margs, np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(DimensionError):
        CopulaPosterior(margs, np.eye(3))


# --- sampling ---

def test_identity_samples_are_uncorrelated(gen):
    post = _kde_posterior(gen, rho=0.0)
    draws = copula_sample(post, 20_000, SeededRng(5))
    assert abs(np.corrcoef(draws.params.T)[0, 1]) < 3 / np.sqrt(20_000)
    assert draws.is_equally_weighted()


def test_sampled_margins_follow_stored_cdf(gen):
    post = _kde_posterior(gen, rho=0.6)
    draws = copula_sample(post, 50_000, SeededRng(6))
    for i, m in enumerate(post.marginals):
        assert stats.kstest(draws.params[:, i], m.cdf).statistic < 0.02


def test_sampled_normal_scores_recover_lambda(gen):
    post = _kde_posterior(gen, rho=0.6)
    m = 50_000
    draws = copula_sample(post, m, SeededRng(8))
    assert pairwise_lambda(draws.params[:, 0], draws.params[:, 1]) == pytest.approx(0.6, abs=3 / np.sqrt(m))


def test_sampling_is_reproducible(gen):
    post = _kde_posterior(gen)
    a = copula_sample(post, 100, SeededRng(9, ("sample",)))
    b = copula_sample(post, 100, SeededRng(9, ("sample",)))
    np.testing.assert_array_equal(a.params, b.params)
    with pytest.raises(DimensionError):
        copula_sample(post, 0, SeededRng(9))


# --- fit ---

def test_two_parameter_fit_matches_single_pair(linear_table):
    smap = SummaryMap.from_univariate([[0, 1], [0, 1]])
    s_obs = np.array([1.0, 0.5])
    post = fit_copula(linear_table, s_obs, smap, 0.05)
    marginals = list(post.marginals)
    sample = pair_sample(linear_table, s_obs, smap, (0, 1), 0.05, DistanceSpec.euclidean(), marginals)
    assert post.lambda_[0, 1] == pairwise_lambda(sample.params[:, 0], sample.params[:, 1])


def test_linear_gaussian_posterior_correlation(linear_table):
    smap = SummaryMap.from_univariate([[0, 1], [0, 1]])
    post = fit_copula(linear_table, np.array([1.0, 0.5]), smap, 0.05)
    assert post.lambda_[0, 1] == pytest.approx(_LINEAR_RHO, abs=0.03)
    assert not post.repair.repaired


def test_literal_pairs_skip_adjustment(linear_table):
    smap = SummaryMap.from_univariate([[0, 1], [0, 1]])
    s_obs = np.array([1.0, 0.5])
    raw = pair_sample(linear_table, s_obs, smap, (0, 1), 0.01, DistanceSpec.euclidean(), None,
                      AdjustFlags(literal_pairs=True))
    adjusted = pair_sample(linear_table, s_obs, smap, (0, 1), 0.01, DistanceSpec.euclidean(), None)
    assert not np.array_equal(raw.params, adjusted.params)


def test_fit_over_parameter_subset(linear_table):
    smap = SummaryMap.from_univariate([[0, 1], [0, 1]])
    post = fit_copula(linear_table, np.array([1.0, 0.5]), smap, 0.05, indices=[1])
    assert post.p == 1 and post.indices == (1,)
    with pytest.raises(DimensionError):
        fit_copula(linear_table, np.array([1.0, 0.5]), smap, 0.05, indices=[1, 1])


def test_fit_checks_observed_length(linear_table):
    smap = SummaryMap.from_univariate([[0], [1]])
    with pytest.raises(DimensionError):
        fit_copula(linear_table, np.zeros(3), smap, 0.05)


# --- approximate MLE ---

def test_flat_prior_mle_is_mode():
    post = CopulaPosterior((NormalMarginal(1.5, 0.5),), np.eye(1))
    res = approx_mle(post, lambda x: 0.0, [0], SeededRng(1))
    assert res.estimate[0] == pytest.approx(1.5, abs=1e-3)
    assert res.se[0] == pytest.approx(0.5, rel=1e-2)
    lo, hi = res.interval()
    assert hi[0] - lo[0] == pytest.approx(4 * res.se[0])
    assert res.converged


def test_normal_prior_mle_closed_form():
    # argmax of log N(x; 1, 1) + x²/8 is 4/3
    post = CopulaPosterior((NormalMarginal(1.0, 1.0),), np.eye(1))
    res = approx_mle(post, lambda x: -0.5 * float(x[0]) ** 2 / 4.0, [0], SeededRng(2))
    assert res.estimate[0] == pytest.approx(4.0 / 3.0, abs=1e-3)


def test_mle_on_marginalized_pair():
    corr = np.array([[1.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 1.0]])
    margs = (NormalMarginal(0.0, 1.0), NormalMarginal(2.0, 0.5), NormalMarginal(-1.0, 3.0))
    post = CopulaPosterior(margs, corr)
    res = approx_mle(post, lambda x: 0.0, [1, 2], SeededRng(3))
    assert res.indices == (1, 2)
    np.testing.assert_allclose(res.estimate, [2.0, -1.0], atol=1e-3)


def test_mle_outside_support_everywhere():
    post = CopulaPosterior((NormalMarginal(0.0, 1.0),), np.eye(1))
    with pytest.raises(NumericalError):
        approx_mle(post, lambda x: -np.inf, [0], SeededRng(4))


# --- storage ---

def test_posterior_round_trip_is_bit_exact(tmp_path, gen):
    kde = _kde_posterior(gen, rho=0.4)
    post = CopulaPosterior((kde.marginals[0], NormalMarginal(0.5, 2.0)), kde.lambda_, indices=(3, 7))
    path = save_posterior(post, tmp_path / "posterior.npz")
    loaded = load_posterior(path)
    assert loaded.indices == (3, 7)
    np.testing.assert_array_equal(loaded.lambda_, post.lambda_)
    np.testing.assert_array_equal(loaded.marginals[0].sample, post.marginals[0].sample)
    assert loaded.marginals[0].bandwidth == post.marginals[0].bandwidth
    assert loaded.marginals[1] == post.marginals[1]
    pts = np.column_stack([gen.normal(1.0, 2.0, 20), gen.normal(0.5, 2.0, 20)])
    np.testing.assert_array_equal(copula_log_density(loaded, pts), copula_log_density(post, pts))


def test_unknown_format_version_rejected(tmp_path, gen):
    path = save_posterior(_kde_posterior(gen), tmp_path / "posterior.npz")
    with np.load(path) as data:
        arrays = dict(data)
    arrays["format_version"] = np.int64(FORMAT_VERSION + 1)
    np.savez(path, **arrays)
    with pytest.raises(ConfigError, match="format version"):
        load_posterior(path)
