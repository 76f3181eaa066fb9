import numpy as np
import pytest

from core.distance import DistanceSpec, distance, distances, estimate_mahalanobis_scale
from core.errors import DimensionError, NumericalError
from core.parallel import parallel_map
from core.rng import SeededRng
from core.samples import SummaryMap, WeightedSampleSet, empirical_quantile, uniform_kernel_threshold


# --- distance ---

def test_distance_identity_is_zero():
    assert distance(np.array([1.0, 2.0]), np.array([1.0, 2.0]), DistanceSpec.euclidean()) == 0.0


def test_mahalanobis_hand_value():
    spec = DistanceSpec.mahalanobis(np.diag([4.0, 1.0]))
    assert distance(np.array([2.0, 1.0]), np.zeros(2), spec) == pytest.approx(np.sqrt(2.0), abs=1e-12)


def test_mahalanobis_with_identity_scale_equals_euclidean(gen):
    a, b = gen.normal(size=(2, 5))
    assert distance(a, b, DistanceSpec.mahalanobis(np.eye(5))) == pytest.approx(
        distance(a, b, DistanceSpec.euclidean()), rel=1e-12
    )


@pytest.mark.parametrize("kind", ["euclidean", "mahalanobis"])
def test_distance_symmetric_and_positive(gen, kind):
    a_ = gen.normal(size=(6, 3))
    scale = a_.T @ a_ + np.eye(3)
    spec = DistanceSpec.euclidean() if kind == "euclidean" else DistanceSpec.mahalanobis(scale)
    for _ in range(20):
        a, b = gen.normal(size=(2, 3))
        assert distance(a, b, spec) == pytest.approx(distance(b, a, spec), rel=1e-12)
        assert distance(a, b, spec) > 0
        assert distance(a, a, spec) == 0.0


def test_distance_dimension_mismatch():
    with pytest.raises(DimensionError):
        distance(np.zeros(2), np.zeros(3), DistanceSpec.euclidean())


def test_distances_vectorized_matches_single(gen):
    rows = gen.normal(size=(10, 4))
    obs = gen.normal(size=4)
    spec = DistanceSpec.euclidean()
    np.testing.assert_allclose(distances(rows, obs, spec), [distance(r, obs, spec) for r in rows], rtol=1e-12)


def test_scale_must_be_positive_definite():
    with pytest.raises(NumericalError, match="positive definite"):
        DistanceSpec.mahalanobis(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_scale_required_only_for_mahalanobis():
    with pytest.raises(DimensionError):
        DistanceSpec("mahalanobis")
    with pytest.raises(DimensionError):
        DistanceSpec("euclidean", np.eye(2))


def test_projected_scale_is_sub_block():
    scale = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]])
    sub = DistanceSpec.mahalanobis(scale).project([0, 2])
    np.testing.assert_array_equal(sub.scale, [[4.0, 0.0], [0.0, 2.0]])


# --- uniform kernel ---

def test_threshold_on_1_to_100():
    d = np.arange(1, 101, dtype=float)
    h = uniform_kernel_threshold(d, 0.05)
    assert h == 5.0
    assert np.sum(d <= h) == 5


def test_threshold_full_acceptance():
    d = np.array([3.0, 1.0, 2.0])
    assert uniform_kernel_threshold(d, 1.0) == 3.0


def test_threshold_large_table_keeps_exactly_k(gen):
    d = gen.permutation(1_000_000).astype(float)
    h = uniform_kernel_threshold(d, 0.01)
    assert np.sum(d <= h) == 10_000


def test_threshold_permutation_invariant(gen):
    d = gen.exponential(size=1000)
    assert uniform_kernel_threshold(d, 0.03) == uniform_kernel_threshold(gen.permutation(d), 0.03)


def test_threshold_errors():
    with pytest.raises(DimensionError):
        uniform_kernel_threshold(np.array([]), 0.1)
    for q in (0.0, 1.5):
        with pytest.raises(DimensionError):
            uniform_kernel_threshold(np.ones(5), q)


def test_empirical_quantile_rounds_up():
    assert empirical_quantile(np.arange(1, 11, dtype=float), 0.01) == 1.0
    assert empirical_quantile(np.arange(1, 11, dtype=float), 0.25) == 3.0


# --- Mahalanobis scale ---

def test_constant_simulator_gives_ridge():
    scale = estimate_mahalanobis_scale(lambda th, g: np.array([1.0, 2.0]), np.zeros(1), 10, SeededRng(1))
    np.testing.assert_allclose(scale, 1e-8 * np.eye(2), rtol=1e-12, atol=0)


def test_scale_recovers_known_covariance():
    scale = estimate_mahalanobis_scale(
        lambda th, g: g.normal(0.0, [2.0, 1.0]), np.zeros(1), 50_000, SeededRng(3, ("scale",))
    )
    assert scale[0, 0] == pytest.approx(4.0, rel=0.05)
    assert scale[1, 1] == pytest.approx(1.0, rel=0.05)
    assert abs(scale[0, 1]) < 0.1


def test_scale_needs_q_plus_one_draws():
    with pytest.raises(DimensionError):
        estimate_mahalanobis_scale(lambda th, g: g.normal(size=3), np.zeros(1), 3, SeededRng(1))


def test_scale_simulator_errors_propagate():
    def broken(theta, gen):
        raise RuntimeError("simulator down")

    with pytest.raises(RuntimeError, match="simulator down"):
        estimate_mahalanobis_scale(broken, np.zeros(1), 10, SeededRng(1))


# --- weighted samples ---

def test_weights_normalized():
    s = WeightedSampleSet(np.ones((4, 2)), np.zeros((4, 1)), np.array([1.0, 2.0, 3.0, 4.0]))
    assert s.weights.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(s.weights, [0.1, 0.2, 0.3, 0.4])


def test_weights_must_not_vanish():
    with pytest.raises(NumericalError):
        WeightedSampleSet(np.ones((3, 1)), np.zeros((3, 1)), np.zeros(3))


def test_row_counts_must_agree():
    with pytest.raises(DimensionError, match="row counts"):
        WeightedSampleSet(np.ones((3, 1)), np.zeros((2, 1)), np.ones(3))


def test_sample_set_is_read_only():
    s = WeightedSampleSet.equally_weighted(np.ones((3, 2)))
    with pytest.raises(ValueError):
        s.params[0, 0] = 5.0


# --- RNG streams ---

def test_same_stream_same_draws():
    a = SeededRng(42, (1, 2)).generator().normal(size=10)
    b = SeededRng(42, (1, 2)).generator().normal(size=10)
    np.testing.assert_array_equal(a, b)


def test_distinct_streams_differ():
    a = SeededRng(42, ("toy-kl", 2, 0)).generator().normal(size=10)
    b = SeededRng(42, ("toy-kl", 2, 1)).generator().normal(size=10)
    assert not np.array_equal(a, b)


def test_text_labels_are_stable():
    assert SeededRng(1, ("pilot",)).stream == SeededRng(1, ("pilot",)).stream
    assert SeededRng(1, ("pilot",)).child(3).stream[-1] == 3


# --- summary maps ---

def test_pair_subset_defaults_to_union():
    smap = SummaryMap.from_univariate([[0], [0, 1], [2]])
    assert smap.pair(0, 2) == (0, 2)
    assert smap.pair(2, 1) == (0, 1, 2)
    assert smap.all_indices() == (0, 1, 2)


def test_pair_override_replaces_union():
    smap = SummaryMap.from_univariate([[0], [1]], overrides={(1, 0): [3]})
    assert smap.pair(0, 1) == (3,)


def test_empty_univariate_subset_names_parameter():
    with pytest.raises(DimensionError, match="parameter 2"):
        SummaryMap.from_univariate([[0], []])


def test_summary_indices_checked_against_q():
    smap = SummaryMap.from_univariate([[0], [5]])
    with pytest.raises(DimensionError, match="out of range"):
        smap.validate(q=3)


# --- parallel map ---

def test_parallel_map_keeps_order():
    assert parallel_map(lambda x: x * x, range(20), threads=4) == [x * x for x in range(20)]
    assert parallel_map(lambda x: x + 1, [1, 2], threads=1) == [2, 3]
