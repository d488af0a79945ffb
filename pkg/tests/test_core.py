import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emgmm import (
    CenterSet,
    Dataset,
    MixtureModel,
    ShapeError,
    ValidationError,
    grad_weight,
    log_density,
    posterior_matrix,
    posterior_weights,
    sample_dataset,
)
from conftest import random_model


def phi(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


class TestMixtureModel:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            MixtureModel([[0.0], [1.0]], [0.5, 0.6])

    def test_weights_must_be_positive(self):
        with pytest.raises(ValidationError):
            MixtureModel([[0.0], [1.0]], [1.0, 0.0])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            MixtureModel([[0.0], [1.0]], [1.0])

    def test_non_finite_centers(self):
        with pytest.raises(ValidationError):
            MixtureModel([[np.nan], [1.0]], [0.5, 0.5])

    def test_immutable(self):
        m = MixtureModel([[0.0, 1.0]], [1.0])
        with pytest.raises(ValueError):
            m.centers[0, 0] = 3.0

    def test_digest_changes_with_centers(self):
        a = MixtureModel([[0.0], [1.0]], [0.5, 0.5])
        b = MixtureModel([[0.0], [1.5]], [0.5, 0.5])
        assert a.digest() != b.digest()
        assert a.digest() == MixtureModel([[0.0], [1.0]], [0.5, 0.5]).digest()

    def test_dict_roundtrip(self):
        m = MixtureModel([[0.0, 2.0], [1.0, -1.0]], [0.25, 0.75])
        assert MixtureModel.from_dict(m.to_dict()) == m


class TestLogDensity:
    def test_standard_normal_mode(self):
        m = MixtureModel([[0.0]], [1.0])
        assert log_density([0.0], m) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)
        assert log_density([0.0], m) == pytest.approx(-0.9189385, abs=1e-7)

    def test_symmetric_two_component(self):
        c = 1.7
        m = MixtureModel([[-c], [c]], [0.5, 0.5])
        assert log_density([0.0], m) == pytest.approx(math.log(phi(c)), rel=1e-12)

    def test_direct_scalar_evaluation(self, two_comp_1d):
        expected = math.log(0.5 * phi(1.0) + 0.5 * phi(3.0))
        assert log_density([1.0], two_comp_1d) == pytest.approx(expected, rel=1e-12)

    def test_d_dimensional_normalisation(self):
        m = MixtureModel([[0.0, 0.0, 0.0]], [1.0])
        assert log_density([0.0, 0.0, 0.0], m) == pytest.approx(-1.5 * math.log(2 * math.pi))

    def test_far_point_is_finite(self):
        m = MixtureModel([[0.0], [30.0]], [0.5, 0.5])
        val = log_density([1e4], m)
        assert np.isfinite(val)
        assert val == pytest.approx(math.log(0.5) - 0.5 * (1e4 - 30.0) ** 2 - 0.5 * math.log(2 * math.pi))

    def test_dimension_mismatch(self, two_comp_1d):
        with pytest.raises(ShapeError):
            log_density([1.0, 2.0], two_comp_1d)


class TestPosteriorWeights:
    def test_single_component(self):
        assert posterior_weights([3.0, -1.0], [[0.0, 0.0]], [1.0]).tolist() == [1.0]

    def test_equidistant(self):
        w = posterior_weights([0.0, 1.0], [[-1.0, 0.0], [1.0, 0.0]], [0.5, 0.5])
        np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-15)

    def test_closed_form_log_odds(self):
        w = posterior_weights([0.0], [[0.0], [4.0]], [0.5, 0.5])
        assert w[0] == pytest.approx(1.0 / (1.0 + math.exp(-8.0)), rel=1e-14)
        assert w[0] == pytest.approx(0.99966465, abs=1e-8)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            posterior_weights([0.0], [[0.0], [4.0]], [1.0])

    def test_matrix_matches_rows(self, rng):
        model = random_model(rng, 4, 3)
        pts = rng.normal(size=(50, 3)) * 4
        mat = posterior_matrix(pts, model.centers, model.weights)
        rows = np.array([posterior_weights(x, model.centers, model.weights) for x in pts])
        np.testing.assert_allclose(mat, rows, rtol=1e-12, atol=1e-15)


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@st.composite
def configs(draw, max_m=4, max_d=5, bound=1e6):
    M = draw(st.integers(1, max_m))
    d = draw(st.integers(1, max_d))
    fl = st.floats(-bound, bound, allow_nan=False, allow_infinity=False)
    x = np.array(draw(st.lists(fl, min_size=d, max_size=d)))
    centers = np.array(draw(st.lists(st.lists(fl, min_size=d, max_size=d), min_size=M, max_size=M)))
    raw = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=M, max_size=M)))
    return x, centers, raw / raw.sum()


@given(configs())
@settings(max_examples=200, deadline=None)
def test_weights_are_a_distribution_even_far_away(cfg):
    x, centers, weights = cfg
    w = posterior_weights(x, centers, weights)
    assert np.all(w >= 0) and np.all(w <= 1)
    assert abs(w.sum() - 1.0) <= 1e-12


@given(configs(), st.data())
@settings(max_examples=100, deadline=None)
def test_permutation_equivariance(cfg, data):
    x, centers, weights = cfg
    perm = np.array(data.draw(st.permutations(range(len(weights)))))
    w = posterior_weights(x, centers, weights)
    wp = posterior_weights(x, centers[perm], weights[perm])
    np.testing.assert_array_equal(wp, w[perm])


@given(configs(bound=50.0), st.lists(st.floats(-100, 100), min_size=5, max_size=5))
@settings(max_examples=100, deadline=None)
def test_translation_equivariance(cfg, shift):
    x, centers, weights = cfg
    v = np.array(shift[: len(x)])
    np.testing.assert_allclose(
        posterior_weights(x + v, centers + v, weights), posterior_weights(x, centers, weights), atol=1e-10
    )


def fd_gradient(x, centers, weights, c, h=1e-5):
    g = np.zeros_like(centers)
    for j in range(centers.shape[0]):
        for k in range(centers.shape[1]):
            up = centers.copy()
            dn = centers.copy()
            up[j, k] += h
            dn[j, k] -= h
            g[j, k] = (posterior_weights(x, up, weights)[c] - posterior_weights(x, dn, weights)[c]) / (2 * h)
    return g


class TestGradWeight:
    def test_single_component_is_zero(self):
        g = grad_weight([1.0, 2.0], [[0.0, 0.0]], [1.0], 0)
        np.testing.assert_array_equal(g, np.zeros((1, 2)))

    def test_symmetric_blocks_have_equal_norms(self):
        g = grad_weight([0.0, 0.7], [[-1.0, 0.0], [1.0, 0.0]], [0.5, 0.5], 0)
        assert np.linalg.norm(g[0]) == pytest.approx(np.linalg.norm(g[1]), rel=1e-14)

    def test_index_error(self):
        with pytest.raises(IndexError):
            grad_weight([0.0], [[0.0], [1.0]], [0.5, 0.5], 2)

    def test_matches_finite_differences(self, rng):
        for _ in range(100):
            M = int(rng.integers(1, 5))
            d = int(rng.integers(1, 6))
            centers = rng.normal(size=(M, d))
            x = rng.normal(size=d)
            w = rng.uniform(0.2, 1.0, size=M)
            w /= w.sum()
            c = int(rng.integers(M))
            g = grad_weight(x, centers, w, c)
            fd = fd_gradient(x, centers, w, c)
            scale = np.linalg.norm(g)
            if scale < 1e-12:
                assert np.linalg.norm(fd) < 1e-9
            else:
                assert np.linalg.norm(g - fd) / scale <= 1e-6

    def test_directional_derivative(self, rng):
        h = 1e-5
        for _ in range(50):
            M = int(rng.integers(2, 5))
            d = int(rng.integers(1, 6))
            centers = rng.normal(size=(M, d))
            x = rng.normal(size=d)
            w = np.full(M, 1.0 / M)
            u = rng.normal(size=(M, d))
            c = int(rng.integers(M))
            analytic = float(np.sum(u * grad_weight(x, centers, w, c)))
            numeric = (posterior_weights(x, centers + h * u, w)[c]
                       - posterior_weights(x, centers - h * u, w)[c]) / (2 * h)
            assert abs(analytic - numeric) <= 1e-6 * max(abs(analytic), 1e-3)


class TestSampleDataset:
    def test_law_of_large_numbers(self):
        n = 100_000
        data = sample_dataset(MixtureModel([[0.0]], [1.0]), n, seed=7)
        assert abs(data.points.mean()) <= 4 / math.sqrt(n)
        assert data.points.var() == pytest.approx(1.0, rel=0.05)

    def test_determinism(self):
        m = MixtureModel([[0.0, 0.0], [3.0, 1.0]], [0.3, 0.7])
        a = sample_dataset(m, 500, seed=99)
        b = sample_dataset(m, 500, seed=99)
        assert a == b
        assert a.points.tobytes() == b.points.tobytes()
        assert sample_dataset(m, 500, seed=100) != a

    def test_label_frequencies(self):
        n = 10_000
        m = MixtureModel([[0.0], [5.0]], [0.9, 0.1])
        counts = sample_dataset(m, n, seed=3).component_counts(2)
        sigma = math.sqrt(n * 0.9 * 0.1)
        assert abs(counts[0] - 0.9 * n) <= 3 * sigma
        assert abs(counts[1] - 0.1 * n) <= 3 * sigma

    def test_provenance(self):
        m = MixtureModel([[0.0], [5.0]], [0.5, 0.5])
        data = sample_dataset(m, 10, seed=1)
        assert data.seed == 1
        assert data.source_model_digest == m.digest()
        assert "labels" not in repr(data)

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            sample_dataset(MixtureModel([[0.0]], [1.0]), 0, seed=1)

    def test_dataset_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            Dataset(np.array([[np.inf]]), 0, "x")


def test_centerset_validation():
    with pytest.raises(ValidationError):
        CenterSet([[np.nan, 0.0]])
    assert CenterSet([[1.0, 2.0]]).M == 1
