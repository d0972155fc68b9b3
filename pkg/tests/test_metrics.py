"""Evaluation metrics and cross-validation plumbing.

Every expected number in this file is computed by hand in an adjacent
comment; none are copied from the implementation's output.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from salient_feedback.gbt import TrainConfig
from salient_feedback.metrics import (
    CVReport,
    Metrics,
    ModelSpec,
    average_precision,
    compute_metrics,
    cross_validate,
    grid_search,
    stratified_folds,
)


class TestComputeMetrics:
    def test_hand_worked_confusion(self):
        # scores [0.9, 0.4, 0.8, 0.3], labels [1, 1, 0, 0], threshold 0.5:
        # predictions [1, 0, 1, 0] -> tp=1 fn=1 fp=1 tn=1,
        # accuracy 2/4, f1 = 2*1 / (2*1 + 1 + 1) = 0.5.
        m = compute_metrics([0.9, 0.4, 0.8, 0.3], [1, 1, 0, 0])
        assert (m.tp, m.fp, m.tn, m.fn) == (1, 1, 1, 1)
        assert m.accuracy == pytest.approx(0.5)
        assert m.f1 == pytest.approx(0.5)
        assert m.n == 4

    def test_average_precision_perfect_ranking(self):
        # scores [0.9, 0.4, 0.8] with labels [1, 0, 1]: descending order puts
        # the two positives at ranks 1 and 2 -> AP = (1/1 + 2/2) / 2 = 1.
        m = compute_metrics([0.9, 0.4, 0.8], [1, 0, 1])
        assert m.pr_auc == pytest.approx(1.0, abs=1e-12)

    def test_average_precision_interleaved_ranking(self):
        # scores [0.9, 0.8, 0.4] with labels [1, 0, 1]: ranked labels are
        # [1, 0, 1] -> AP = (1/1 + 2/3) / 2 = 5/6.
        m = compute_metrics([0.9, 0.8, 0.4], [1, 0, 1])
        assert m.pr_auc == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_threshold_is_inclusive(self):
        m = compute_metrics([0.5], [1], threshold=0.5)
        assert m.tp == 1 and m.fn == 0

    def test_all_negative_predictions_give_zero_f1(self):
        m = compute_metrics([0.1, 0.2], [1, 1])
        assert m.f1 == 0.0
        assert m.accuracy == 0.0

    def test_no_positives_yields_nan_pr_auc_and_null_json(self):
        m = compute_metrics([0.9, 0.1], [0, 0])
        assert math.isnan(m.pr_auc)
        assert m.to_dict()["pr_auc"] is None

    def test_tied_scores_rank_stably_by_position(self):
        # All scores equal: positives sit at their original positions, so
        # labels [0, 1, 1] rank as-is -> AP = (1/2 + 2/3) / 2 = 7/12.
        ap = average_precision(np.asarray([0.5, 0.5, 0.5]), np.asarray([0, 1, 1]))
        assert ap == pytest.approx(7.0 / 12.0, abs=1e-12)

    @pytest.mark.parametrize(
        "scores, labels",
        [([], []), ([0.5], [2]), ([0.5, 0.5], [1])],
    )
    def test_bad_inputs_rejected(self, scores, labels):
        with pytest.raises(ValueError):
            compute_metrics(scores, labels)

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
                st.integers(min_value=0, max_value=1),
            ),
            min_size=1,
            max_size=30,
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_invariants(self, pairs):
        scores = [s for s, _ in pairs]
        labels = [l for _, l in pairs]
        m = compute_metrics(scores, labels)
        assert m.tp + m.fp + m.tn + m.fn == m.n == len(pairs)
        assert 0.0 <= m.accuracy <= 1.0
        assert 0.0 <= m.f1 <= 1.0
        if sum(labels) > 0:
            assert 0.0 <= m.pr_auc <= 1.0
        else:
            assert math.isnan(m.pr_auc)


class TestStratifiedFolds:
    def test_partition_and_balance(self):
        y = np.asarray([0] * 13 + [1] * 7)
        fold = stratified_folds(y, k=4, seed=0)
        assert fold.shape == (20,)
        assert set(fold.tolist()) == {0, 1, 2, 3}
        for cls, total in ((0, 13), (1, 7)):
            counts = [int(np.sum((fold == f) & (y == cls))) for f in range(4)]
            assert sum(counts) == total
            assert max(counts) - min(counts) <= 1

    def test_deterministic_per_seed(self):
        y = np.asarray([0, 1] * 25)
        a = stratified_folds(y, 5, seed=3)
        b = stratified_folds(y, 5, seed=3)
        c = stratified_folds(y, 5, seed=4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_bounds(self):
        with pytest.raises(ValueError):
            stratified_folds(np.asarray([0, 1, 0]), k=1, seed=0)
        with pytest.raises(ValueError):
            stratified_folds(np.asarray([0, 1]), k=3, seed=0)


class TestModelSpec:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            ModelSpec(kind="xgboost")

    def test_all_registered_kinds_fit(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(60, 3))
        y = (x[:, 0] > 0).astype(float)
        for kind in ("gbt", "logreg", "decision_tree", "random_forest"):
            model = ModelSpec(kind, TrainConfig(n_trees=5, max_depth=2)).fit(x, y)
            p = model.predict_proba(x)
            assert p.shape == (60,)


class TestCrossValidate:
    def test_out_of_fold_metrics_reflect_generalization(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(200, 4))
        y = (x[:, 1] > 0).astype(int)
        report = cross_validate(
            x, y, ModelSpec("gbt", TrainConfig(n_trees=20, max_depth=3)), k=5, seed=0
        )
        assert isinstance(report, CVReport)
        assert report.pooled.n == 200
        assert report.pooled.f1 >= 0.9
        assert len(report.folds) == 5
        assert sum(f.n for f in report.folds) == 200

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(120, 3))
        y = (x[:, 0] > 0).astype(int)
        spec = ModelSpec("gbt", TrainConfig(n_trees=8, max_depth=2))
        a = cross_validate(x, y, spec, k=4, seed=7)
        b = cross_validate(x, y, spec, k=4, seed=7)
        assert a.to_dict() == b.to_dict()

    def test_report_serializes(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(80, 2))
        y = (x[:, 0] > 0).astype(int)
        d = cross_validate(x, y, ModelSpec("logreg"), k=4, seed=0).to_dict()
        assert d["k"] == 4
        assert {"pooled", "fold_mean", "folds", "k", "seed"} <= d.keys()


class TestGridSearch:
    def test_picks_the_stronger_config(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(200, 4))
        y = (x[:, 2] > 0).astype(int)
        stump = TrainConfig(n_trees=1, max_depth=0)  # prior only
        real = TrainConfig(n_trees=15, max_depth=3)
        best, report = grid_search(x, y, "gbt", [stump, real], k=4, seed=0)
        assert best == real
        assert report.pooled.f1 >= 0.9

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            grid_search(np.zeros((4, 1)), np.asarray([0, 1, 0, 1]), "gbt", [])
