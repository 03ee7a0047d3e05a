import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from galife import kernels
from galife.predictors.ml import (ClassBinning, MlPredictor, RfModel, discretize_labels, fit_lda,
                                  fit_ml, fit_nb, fit_rf, make_class_binning, single_tree_oob_error)


def two_gaussians_1d():
    x0 = np.array([-1.0, 0.0, 1.0])
    x1 = x0 + 2.0
    V = np.concatenate([x0, x1])[:, None]
    y = np.array([0, 0, 0, 1, 1, 1])
    return V, y


def _boundary(score_diff):
    """Root of a monotone score difference on [-5, 5] by bisection."""
    lo, hi = -5.0, 5.0
    f_lo = score_diff(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sign(score_diff(mid)) == np.sign(f_lo):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_discretize_examples():
    y, s = discretize_labels(np.array([3.0, 7.0, 12.0, 7.0]))
    np.testing.assert_array_equal(s.decode(y), [3, 7, 12, 7])
    s5 = make_class_binning(np.array([12.0, 3.0]), width=5)
    k = s5.encode([12.0])
    assert s5.edges[k[0]] == 10 and s5.edges[k[0] + 1] == 15
    assert s5.decode(k)[0] == 12.5
    y, s = discretize_labels(np.full(7, 9.0))
    assert s.n_classes == 1 and np.all(y == 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 400), min_size=1, max_size=200))
def test_class_binning_covers_labels(labels):
    X = np.array(labels, dtype=float)
    s = make_class_binning(X)
    assert s.n_classes <= 40
    idx = s.encode(X)
    if s.width is None:
        np.testing.assert_array_equal(s.decode(idx), X)
    else:
        e = s.edges
        assert np.all(np.diff(e) > 0)
        assert np.all((e[idx] <= X) & (X < e[idx + 1]))


def test_lda_boundary_at_one():
    V, y = two_gaussians_1d()
    m = fit_lda(V, y)
    b = _boundary(lambda x: np.diff(m.decision_function([[x]])[0])[0])
    assert b == pytest.approx(1.0, abs=1e-6)


def test_nb_boundary_at_one():
    V, y = two_gaussians_1d()
    m = fit_nb(V, y)
    b = _boundary(lambda x: np.diff(m.log_posterior([[x]])[0])[0])
    assert b == pytest.approx(1.0, abs=1e-6)


def test_lda_matches_hand_discriminant():
    V = np.array([[0.0, 1.0], [1.0, 0.0], [4.0, 4.0], [5.0, 3.0], [0.5, 0.2]])
    y = np.array([0, 0, 1, 1, 0])
    m = fit_lda(V, y)
    mu = [V[y == k].mean(axis=0) for k in (0, 1)]
    r = V - np.array(mu)[y]
    S = r.T @ r / (len(y) - 2)
    P = np.linalg.inv(S)
    pri = [3 / 5, 2 / 5]
    q = np.array([[2.0, 2.0], [3.0, 1.5], [1.0, 3.0]])
    hand = np.array([[x @ P @ mu[k] - 0.5 * mu[k] @ P @ mu[k] + np.log(pri[k]) for k in (0, 1)] for x in q])
    np.testing.assert_allclose(m.decision_function(q), hand, rtol=1e-10)
    np.testing.assert_array_equal(m.predict_class(q), hand.argmax(axis=1))


def test_prototype_classification_all_models():
    rng = np.random.default_rng(0)
    centers = np.array([[0.0] * 9, [10.0] * 9, [-10.0] * 9])
    V = np.vstack([c + rng.normal(size=(30, 9)) for c in centers])
    y = np.repeat([0, 1, 2], 30)
    for m in (fit_lda(V, y), fit_nb(V, y), fit_rf(V, y, seed=1, n_trees=20)):
        np.testing.assert_array_equal(m.predict_class(centers), [0, 1, 2])
        assert np.all(m.predict_class(V) == y)


def test_rf_single_class_and_degenerate_forest():
    V = np.random.default_rng(1).normal(size=(20, 9))
    m = fit_rf(V, np.full(20, 0), seed=0, n_trees=10)
    assert np.all(m.predict_class(np.random.default_rng(2).normal(size=(5, 9))) == 0)
    leaf = (np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([2]))
    forest = RfModel(4, [leaf] * 100, 3)
    assert np.all(forest.predict_class(V) == 2)


def test_rf_tie_goes_to_smaller_class():
    a = (np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([3]))
    b = (np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([1]))
    assert RfModel(4, [a, b], 3).predict_class(np.zeros((1, 9)))[0] == 1


def test_lda_affine_invariance():
    rng = np.random.default_rng(4)
    V = np.vstack([rng.normal(size=(40, 9)), rng.normal(size=(40, 9)) + 1.5])
    y = np.repeat([0, 1], 40)
    q = rng.normal(size=(50, 9)) + 0.75
    scale, shift = 3.7, -12.0
    a = fit_lda(V, y).predict_class(q)
    b = fit_lda(V * scale + shift, y).predict_class(q * scale + shift)
    np.testing.assert_array_equal(a, b)


def test_nb_masked_feature_irrelevant():
    rng = np.random.default_rng(5)
    V = np.vstack([rng.normal(size=(40, 3)), rng.normal(size=(40, 3)) + 2])
    y = np.repeat([0, 1], 40)
    m = fit_nb(V, y)
    q = rng.normal(size=(30, 3)) + 1
    m.means[:, 2] = 0.3
    m.variances[:, 2] = 1.7
    keep = fit_nb(V[:, :2], y)
    np.testing.assert_array_equal(m.predict_class(q), keep.predict_class(q[:, :2]))


def test_nb_variance_floor_and_nan():
    V = np.ones((10, 2))
    V[5:, 0] = 2.0
    y = np.repeat([0, 1], 5)
    m = fit_nb(V, y)
    assert np.all(m.variances > 0)
    assert np.all(np.isfinite(m.log_posterior(V)))
    with pytest.raises(ValueError):
        fit_nb(np.full((4, 2), np.nan), np.array([0, 0, 1, 1]))
    with pytest.raises(ValueError):
        m.predict_class(np.ones((1, 3)))


def test_separable_fixture_full_training_accuracy():
    rng = np.random.default_rng(6)
    V = rng.normal(size=(200, 9))
    y = (V[:, 0] > 0).astype(np.int64)
    V[:, 0] += np.where(y == 1, 5.0, -5.0)
    for m in (fit_lda(V, y), fit_nb(V, y), fit_rf(V, y, seed=0)):
        assert np.all(m.predict_class(V) == y)


@pytest.mark.parametrize("seed", range(5))
def test_rf_oob_not_worse_than_single_tree(seed):
    rng = np.random.default_rng(100 + seed)
    V = rng.normal(size=(150, 9))
    y = ((V[:, 0] + V[:, 1] ** 2 + 0.5 * rng.normal(size=150)) > 1).astype(np.int64)
    assert fit_rf(V, y, seed=seed).oob_error <= single_tree_oob_error(V, y, seed=seed)


def test_rf_deterministic_and_json(tmp_path):
    rng = np.random.default_rng(7)
    V = rng.normal(size=(120, 9))
    X = np.round(np.abs(V[:, 0]) * 10) + 4
    a = fit_ml("rf", V, X, seed=3, n_trees=15)
    b = fit_ml("rf", V, X, seed=3, n_trees=15)
    np.testing.assert_array_equal(a.predict(V), b.predict(V))
    a.save(str(tmp_path / "rf.json"))
    back = MlPredictor.load(str(tmp_path / "rf.json"))
    np.testing.assert_array_equal(back.predict(V), a.predict(V))
    for method in ("lda", "nb"):
        m = fit_ml(method, V, X)
        m.save(str(tmp_path / f"{method}.json"))
        np.testing.assert_array_equal(MlPredictor.load(str(tmp_path / f"{method}.json")).predict(V),
                                      m.predict(V))


def test_predictor_clamps_to_covered():
    V = np.vstack([np.zeros((5, 9)), np.ones((5, 9))])
    X = np.array([4.0] * 5 + [30.0] * 5)
    m = fit_ml("lda", V, X)
    np.testing.assert_array_equal(m.predict(np.zeros((1, 9)), covered=[9]), [9.0])
    np.testing.assert_array_equal(m.predict(np.zeros((1, 9)), covered=[2]), [4.0])
