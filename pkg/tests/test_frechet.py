import numpy as np
import pytest
import scipy.linalg

from evaluation.frechet import (diagonal_frechet, embed, fit_gaussian, frechet_distance, frechet_from_embeddings,
                                frechet_from_fits, full_frechet)


def sqrtm_oracle(mean_x, cov_x, mean_y, cov_y) -> float:
    cross = scipy.linalg.sqrtm(cov_x @ cov_y).real
    return float(np.sum((mean_x - mean_y) ** 2) + np.trace(cov_x + cov_y - 2.0 * cross))


def test_one_dimensional_closed_form():
    assert diagonal_frechet(np.array([0.0]), np.array([1.0]), np.array([1.0]), np.array([2.0])) == pytest.approx(2.0)


def test_from_samples_with_known_moments():
    unit = np.array([-1.0, 1.0]) / np.sqrt(2.0)
    assert frechet_from_embeddings(unit, 1.0 + 2.0 * unit) == pytest.approx(2.0, abs=1e-12)


def test_identical_sets(rng):
    x = rng.standard_normal((50, 8))
    assert frechet_from_embeddings(x, x) == 0.0
    assert frechet_from_embeddings(x, x, full=True) == pytest.approx(0.0, abs=1e-8)


def test_symmetric_and_nonnegative(rng):
    x, y = rng.standard_normal((40, 6)), rng.standard_normal((30, 6)) * 2 + 1
    assert frechet_from_embeddings(x, y) == pytest.approx(frechet_from_embeddings(y, x))
    assert frechet_from_embeddings(x, y) >= 0.0


def test_diagonal_matches_trace_formula(rng):
    for _ in range(10):
        dim = int(rng.integers(1, 6))
        mean_x, mean_y = rng.standard_normal(dim), rng.standard_normal(dim)
        var_x, var_y = rng.uniform(0.1, 3.0, dim), rng.uniform(0.1, 3.0, dim)
        expected = sqrtm_oracle(mean_x, np.diag(var_x), mean_y, np.diag(var_y))
        assert abs(diagonal_frechet(mean_x, np.sqrt(var_x), mean_y, np.sqrt(var_y)) - expected) <= 1e-10


def test_full_covariance_matches_sqrtm(rng):
    a, b = rng.standard_normal((5, 5)), rng.standard_normal((5, 5))
    cov_x, cov_y = a @ a.T + 0.1 * np.eye(5), b @ b.T + 0.1 * np.eye(5)
    mean_x, mean_y = rng.standard_normal(5), rng.standard_normal(5)
    assert full_frechet(mean_x, cov_x, mean_y, cov_y) == pytest.approx(sqrtm_oracle(mean_x, cov_x, mean_y, cov_y),
                                                                        rel=1e-6)


def test_unbiased_variance():
    fit = fit_gaussian(np.array([[0.0], [2.0]]))
    assert fit.diagonal
    assert fit.covariance[0] == pytest.approx(2.0)


def test_needs_two_samples():
    with pytest.raises(ValueError):
        fit_gaussian(np.zeros((1, 4)))


def test_mixed_fits_rejected(rng):
    x = rng.standard_normal((5, 2))
    with pytest.raises(ValueError):
        frechet_from_fits(fit_gaussian(x), fit_gaussian(x, full=True))


def test_embedding_shape_and_determinism(tiny_extractor, rng):
    images = rng.uniform(-1, 1, size=(3, 3, 32, 32))
    first = embed(tiny_extractor, images, batch_size=2)
    assert first.shape == (3, 8)
    assert first.dtype == np.float64
    np.testing.assert_allclose(first, embed(tiny_extractor, images), rtol=1e-10, atol=1e-12)


def test_frechet_distance_on_images(tiny_extractor, rng):
    x = rng.uniform(-1, 1, size=(4, 3, 32, 32))
    y = rng.uniform(-1, 1, size=(4, 3, 32, 32)) * 0.2
    assert frechet_distance(x, x, tiny_extractor) == 0.0
    assert frechet_distance(x, y, tiny_extractor) > 0.0
    with pytest.raises(ValueError):
        frechet_distance(x[:1], y, tiny_extractor)
