"""Reference classifiers: logistic regression, CART, random forest."""

from __future__ import annotations

import math

import numpy as np
import pytest

from salient_feedback.baselines import fit_baseline
from salient_feedback.gbt import TrainConfig


def _separable(n=240, m=4, seed=0, signal=1):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, m))
    y = (x[:, signal] > 0.0).astype(float)
    return x, y


class TestLogreg:
    def test_learns_linear_boundary(self):
        x, y = _separable(seed=1)
        model = fit_baseline("logreg", x, y)
        pred = (model.predict_proba(x) >= 0.5).astype(float)
        assert float((pred == y).mean()) >= 0.97

    def test_constant_features_recover_the_prior(self):
        # With no usable signal and an unpenalized intercept the fitted
        # probability must equal the class prior.
        x = np.ones((40, 3))
        y = np.asarray([1.0] * 10 + [0.0] * 30)
        model = fit_baseline("logreg", x, y)
        np.testing.assert_allclose(model.predict_proba(x), np.full(40, 0.25), atol=1e-6)

    def test_probabilities_bounded(self):
        x, y = _separable(seed=2)
        p = fit_baseline("logreg", x, y).predict_proba(x * 50)
        assert np.all(p > 0.0) and np.all(p < 1.0)

    def test_l2_shrinks_weights(self):
        x, y = _separable(seed=3)
        loose = fit_baseline("logreg", x, y, TrainConfig(reg_lambda=0.01))
        tight = fit_baseline("logreg", x, y, TrainConfig(reg_lambda=100.0))
        margin_spread = lambda m: float(np.std(m.predict_proba(x)))
        assert margin_spread(tight) < margin_spread(loose)


class TestDecisionTree:
    def test_fits_axis_aligned_rule(self):
        x, y = _separable(seed=4)
        model = fit_baseline("decision_tree", x, y, TrainConfig(max_depth=3))
        pred = (model.predict_proba(x) >= 0.5).astype(float)
        assert float((pred == y).mean()) >= 0.97

    def test_depth_zero_is_the_prior(self):
        x, y = _separable(seed=5)
        model = fit_baseline("decision_tree", x, y, TrainConfig(max_depth=0))
        np.testing.assert_allclose(model.predict_proba(x), np.full(len(y), y.mean()))

    def test_min_leaf_blocks_outlier_isolation(self):
        x = np.asarray([[0.0], [0.0], [0.0], [0.0], [10.0]])
        y = np.asarray([0.0, 0.0, 0.0, 0.0, 1.0])
        model = fit_baseline(
            "decision_tree", x, y, TrainConfig(max_depth=3, min_child_weight=2.0)
        )
        # The lone positive cannot be split off, so every row keeps the prior.
        np.testing.assert_allclose(model.predict_proba(x), np.full(5, 0.2))


class TestRandomForest:
    def test_single_tree_forest_reproduces_cart(self):
        x, y = _separable(seed=6)
        cfg = TrainConfig(n_trees=1, max_depth=4, seed=9)
        cart = fit_baseline("decision_tree", x, y, cfg)
        forest = fit_baseline(
            "random_forest", x, y, cfg, bootstrap=False, n_features_per_split=None
        )
        np.testing.assert_allclose(forest.predict_proba(x), cart.predict_proba(x), atol=0)

    def test_ensemble_beats_chance_and_is_deterministic(self):
        x, y = _separable(seed=7)
        cfg = TrainConfig(n_trees=20, max_depth=4, seed=3)
        a = fit_baseline("random_forest", x, y, cfg)
        b = fit_baseline("random_forest", x, y, cfg)
        np.testing.assert_allclose(a.predict_proba(x), b.predict_proba(x), atol=0)
        pred = (a.predict_proba(x) >= 0.5).astype(float)
        assert float((pred == y).mean()) >= 0.9

    def test_seed_changes_bootstrap(self):
        x, y = _separable(seed=8)
        a = fit_baseline("random_forest", x, y, TrainConfig(n_trees=5, max_depth=3, seed=1))
        b = fit_baseline("random_forest", x, y, TrainConfig(n_trees=5, max_depth=3, seed=2))
        assert not np.allclose(a.predict_proba(x), b.predict_proba(x))


class TestFitBaseline:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            fit_baseline("svm", np.zeros((4, 2)), np.asarray([0.0, 1.0, 0.0, 1.0]))

    def test_non_binary_labels_rejected(self):
        with pytest.raises(ValueError, match="binary"):
            fit_baseline("logreg", np.zeros((3, 2)), np.asarray([0.0, 2.0, 1.0]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            fit_baseline("logreg", np.zeros((3, 2)), np.zeros(4))
