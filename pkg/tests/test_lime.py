import itertools

import numpy as np
import pytest

from mlfexplain.errors import SingularDesignError, ValidationError
from mlfexplain.lime import fit_weighted_ridge, lime_explain, masked_images
from mlfexplain.segmentation import Partition


def _strip(m):
    """1 x m image with one pixel per segment, all pixels 1."""
    return np.ones((1, m)), Partition(np.arange(m), m, (1, m))


def _all_masks(m):
    return np.array(list(itertools.product([0, 1], repeat=m)), dtype=float)


def test_two_segment_linear_model():
    img, part = _strip(2)
    model = lambda X: 2.0 * X[:, 0]
    exp = lime_explain(model, img, part, ridge=1e-6, masks=_all_masks(2))
    np.testing.assert_allclose(exp.weights, [2.0, 0.0], atol=1e-3)
    assert exp.n_samples == 4


def test_constant_model():
    img, part = _strip(3)
    exp = lime_explain(lambda X: np.full(len(X), 0.7), img, part, n_samples=50, seed=1)
    np.testing.assert_allclose(exp.weights, 0.0, atol=1e-12)
    assert exp.intercept == pytest.approx(0.7, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_recovers_random_linear_models(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 7))
    img, part = _strip(m)
    coef = rng.normal(size=m)
    model = lambda X: X @ coef + 0.3
    exp = lime_explain(model, img, part, ridge=1e-6, masks=_all_masks(m))
    assert np.corrcoef(exp.weights, coef)[0, 1] > 0.99


def test_masked_images_replace_dropped_segments():
    img = np.array([[0.2, 0.4], [0.6, 0.8]])
    part = Partition(np.array([0, 0, 1, 1]), 2, (2, 2))
    out = masked_images(img, part, np.array([[1, 0], [0, 1]]))
    np.testing.assert_array_equal(out, [[0.2, 0.4, 0, 0], [0, 0, 0.6, 0.8]])
    rgb = np.random.default_rng(0).random((2, 2, 3))
    out = masked_images(rgb, part, np.array([[0, 1]]), fill="mean")
    np.testing.assert_allclose(out[0, :6], rgb.mean())
    np.testing.assert_array_equal(out[0, 6:], rgb[1].ravel())


def test_weighted_ridge_matches_closed_form():
    rng = np.random.default_rng(2)
    X = rng.random((30, 3))
    y = rng.random(30)
    w = rng.random(30)
    coef, b = fit_weighted_ridge(X, y, w, 0.5)
    # independent oracle: augmented least squares with an unpenalised intercept
    A = np.c_[X, np.ones(30)] * np.sqrt(w)[:, None]
    P = np.diag([np.sqrt(0.5)] * 3 + [0.0])
    sol = np.linalg.lstsq(np.r_[A, P], np.r_[y * np.sqrt(w), np.zeros(4)], rcond=None)[0]
    np.testing.assert_allclose(np.r_[coef, b], sol, rtol=1e-10, atol=1e-12)


def test_deterministic_given_seed():
    img, part = _strip(4)
    model = lambda X: X @ np.array([0.1, 0.5, -0.2, 0.3])
    a = lime_explain(model, img, part, n_samples=200, seed=3)
    b = lime_explain(model, img, part, n_samples=200, seed=3)
    assert a.weights.tobytes() == b.weights.tobytes()
    assert np.argmax(a.weights) == 1


def test_singular_design_raises_after_retries():
    img, part = _strip(3)
    # a tiny kernel leaves weight only on the all-kept mask
    with pytest.raises(SingularDesignError):
        lime_explain(lambda X: X.sum(axis=1), img, part, n_samples=20, kernel_width=1e-3)


def test_argument_validation():
    img, part = _strip(4)
    with pytest.raises(ValidationError):
        lime_explain(lambda X: X.sum(axis=1), img, part, n_samples=4)
    with pytest.raises(ValidationError):
        lime_explain(lambda X: X.sum(axis=1), img, part, kernel_width=0.0)
