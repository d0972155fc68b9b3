"""Correctness probes: nearest violating values and signed confidence change.

Expected probabilities come from hand-evaluated sigmoid margins, e.g.
sigma(3) = 0.9525741268224334, sigma(1) = 0.7310585786300049; deltas in the
rank experiment are differences of those frozen constants.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from helpers import indicator_model, leaf, manual_model, split
from salient_feedback.anchors import Predicate
from salient_feedback.correctness import (
    DomainError,
    RankExperimentResult,
    implicit_predicate,
    nearest_violating_value,
    rank_delta_experiment,
    signed_confidence_change,
)
from salient_feedback.features import Aggregator, FeatureSchema, Window, make_feature

FAT = "Meal Macros (Fat level)"
CARBS = "Meal Macros (Carbs level)"
PROTEIN = "Meal Macros (Protein level)"


def level_schema() -> FeatureSchema:
    """Three ordered level features, each with domain {0, 1, 2}."""
    return FeatureSchema(
        (
            make_feature("macro.fat", Aggregator.IDENTITY, None),
            make_feature("macro.carbs", Aggregator.IDENTITY, None),
            make_feature("macro.protein", Aggregator.IDENTITY, None),
        )
    )


def fat_spec():
    return make_feature("macro.fat", Aggregator.IDENTITY, None)


class TestNearestViolatingValue:
    def test_ge_picks_largest_value_below(self):
        assert nearest_violating_value(Predicate(FAT, ">=", 2.0), fat_spec()) == 1.0
        assert nearest_violating_value(Predicate(FAT, ">=", 1.0), fat_spec()) == 0.0

    def test_ge_at_domain_minimum_has_no_violation(self):
        with pytest.raises(DomainError):
            nearest_violating_value(Predicate(FAT, ">=", 0.0), fat_spec())

    def test_le_picks_smallest_value_above(self):
        assert nearest_violating_value(Predicate(FAT, "<=", 0.0), fat_spec()) == 1.0
        assert nearest_violating_value(Predicate(FAT, "<=", 1.0), fat_spec()) == 2.0

    def test_le_at_domain_maximum_has_no_violation(self):
        with pytest.raises(DomainError):
            nearest_violating_value(Predicate(FAT, "<=", 2.0), fat_spec())

    def test_eq_tie_prefers_lower_neighbor(self):
        # 0 and 2 are equidistant from 1; the lower neighbor wins.
        assert nearest_violating_value(Predicate(FAT, "==", 1.0), fat_spec()) == 0.0
        assert nearest_violating_value(Predicate(FAT, "==", 0.0), fat_spec()) == 1.0
        assert nearest_violating_value(Predicate(FAT, "==", 2.0), fat_spec()) == 1.0

    def test_fraction_grid(self):
        spec = make_feature("cooking.baked", Aggregator.MEAN, Window.PREV3)
        assert nearest_violating_value(Predicate(spec.name, "<=", 0.5), spec) == 0.75
        assert nearest_violating_value(Predicate(spec.name, ">=", 0.5), spec) == 0.25

    def test_open_domain_uses_observed_values(self):
        spec = make_feature("macro.fat", Aggregator.SD, Window.PREV2)
        observed = np.asarray([0.1, 0.5, 0.9])
        assert nearest_violating_value(Predicate(spec.name, ">=", 0.5), spec, observed) == 0.1

    def test_open_domain_without_observations_rejected(self):
        spec = make_feature("macro.fat", Aggregator.SD, Window.PREV2)
        with pytest.raises(DomainError, match="no observations"):
            nearest_violating_value(Predicate(spec.name, ">=", 0.5), spec)

    def test_single_point_observed_domain_rejected(self):
        spec = make_feature("macro.fat", Aggregator.SD, Window.PREV2)
        observed = np.asarray([0.5, 0.5, 0.5])
        with pytest.raises(DomainError, match="single-point"):
            nearest_violating_value(Predicate(spec.name, "==", 0.5), spec, observed)

    def test_domain_error_is_a_value_error(self):
        assert issubclass(DomainError, ValueError)


class TestImplicitPredicate:
    def test_equality_at_observed_value(self):
        pred = implicit_predicate(fat_spec(), 2.0)
        assert pred == Predicate(FAT, "==", 2.0)


class TestSignedConfidenceChange:
    def test_supporting_rule_positive_class(self):
        # Model: +4 iff fat >= 2.  x has fat=2 so p = sigma(4); violating the
        # rule moves fat to 1 giving p' = sigma(-4).
        # delta = sigma(4) - sigma(-4) = 0.9640275800758169.
        schema = level_schema()
        model = indicator_model(0, 2.0, 3)
        delta = signed_confidence_change(
            model, np.asarray([2.0, 0.0, 0.0]), None, schema, Predicate(FAT, ">=", 2.0)
        )
        assert delta == pytest.approx(0.9640275800758169)

    def test_supporting_rule_negative_class_is_also_positive(self):
        # Model: +4 iff fat >= 1.  x has fat=0, predicted negative (y = -1);
        # violating fat <= 0 moves fat to 1 and flips the margin, so
        # delta = -(sigma(-4) - sigma(4)) = +0.9640275800758169.
        schema = level_schema()
        model = indicator_model(0, 1.0, 3)
        delta = signed_confidence_change(
            model, np.asarray([0.0, 0.0, 0.0]), None, schema, Predicate(FAT, "<=", 0.0)
        )
        assert delta == pytest.approx(0.9640275800758169)

    def test_irrelevant_feature_changes_nothing(self):
        schema = level_schema()
        model = indicator_model(0, 2.0, 3)
        delta = signed_confidence_change(
            model, np.asarray([2.0, 1.0, 0.0]), None, schema, Predicate(CARBS, "==", 1.0)
        )
        assert delta == 0.0

    def test_perturbed_feature_is_unmasked(self):
        # fat is masked, so the original prediction follows the default-left
        # branch (margin -4, predicted negative).  The perturbation writes
        # fat=1 and must clear the mask: 1 >= 1 routes right, margin +4.
        # delta = -(sigma(-4) - sigma(4)) = +0.9640275800758169.
        schema = level_schema()
        model = indicator_model(0, 1.0, 3)
        mask = np.asarray([True, False, False])
        delta = signed_confidence_change(
            model, np.asarray([2.0, 0.0, 0.0]), mask, schema, Predicate(FAT, ">=", 2.0)
        )
        assert delta == pytest.approx(0.9640275800758169)


class TestRankDeltaExperiment:
    def _graded_model(self):
        # Margin = 3*I(fat>=1) + 2*I(carbs>=1) + 1*I(protein>=1) - 3.
        trees = [
            split(0, 1.0, leaf(0.0), leaf(3.0)),
            split(1, 1.0, leaf(0.0), leaf(2.0)),
            split(2, 1.0, leaf(0.0), leaf(1.0)),
        ]
        return manual_model(trees, 3, base=-3.0)

    def test_hand_worked_rank_deltas(self):
        # x = (1,1,1): margin 3, p = sigma(3).  Perturbing the rank-r feature
        # to 0 drops its tree's contribution:
        #   rank 1 (fat):     p' = sigma(0) -> delta = 0.45257412682243336
        #   rank 2 (carbs):   p' = sigma(1) -> delta = 0.22151554819242847
        #   rank 3 (protein): p' = sigma(2) -> delta = 0.07177704884455105
        schema = level_schema()
        model = self._graded_model()
        x = np.asarray([[1.0, 1.0, 1.0]])
        mask = np.zeros_like(x, dtype=bool)
        attributions = np.asarray([[3.0, 2.0, 1.0]])
        result = rank_delta_experiment(model, x, mask, schema, attributions, ranks=(1, 2, 3))
        assert result.n_instances == 1
        assert result.mean_delta_by_rank[1] == pytest.approx(0.45257412682243336)
        assert result.mean_delta_by_rank[2] == pytest.approx(0.22151554819242847)
        assert result.mean_delta_by_rank[3] == pytest.approx(0.07177704884455105)
        assert result.is_strictly_decreasing((1, 2, 3))

    def test_anchor_rules_override_implicit_equality(self):
        # With fat=2 the implicit rule (== 2) perturbs to 1, which still
        # satisfies fat >= 1 and leaves the margin unchanged (delta 0).  The
        # anchor rule fat >= 1 perturbs to 0 and drops the margin to 0.
        schema = level_schema()
        model = self._graded_model()
        x = np.asarray([[2.0, 1.0, 1.0]])
        mask = np.zeros_like(x, dtype=bool)
        attributions = np.asarray([[3.0, 2.0, 1.0]])
        implicit = rank_delta_experiment(model, x, mask, schema, attributions, ranks=(1,))
        assert implicit.mean_delta_by_rank[1] == pytest.approx(0.0)
        anchored = rank_delta_experiment(
            model,
            x,
            mask,
            schema,
            attributions,
            ranks=(1,),
            rules=[{FAT: Predicate(FAT, ">=", 1.0)}],
        )
        assert anchored.mean_delta_by_rank[1] == pytest.approx(0.45257412682243336)

    def test_domain_error_rows_are_skipped(self):
        # Rank 1 lands on an open-domain feature whose only observed value is
        # the instance's own, so no violating value exists -> NaN mean; the
        # other rank still averages normally.
        schema = FeatureSchema(
            (
                make_feature("macro.fat", Aggregator.IDENTITY, None),
                make_feature("macro.fat", Aggregator.SD, Window.PREV2),
                make_feature("macro.carbs", Aggregator.IDENTITY, None),
            )
        )
        model = indicator_model(0, 1.0, 3)
        x = np.asarray([[1.0, 0.5, 1.0]])
        mask = np.zeros_like(x, dtype=bool)
        attributions = np.asarray([[1.0, 5.0, 0.5]])
        result = rank_delta_experiment(model, x, mask, schema, attributions, ranks=(1, 2))
        assert math.isnan(result.mean_delta_by_rank[1])
        # Rank 2 is fat: == 1 perturbs to 0, flipping +4 to -4.
        assert result.mean_delta_by_rank[2] == pytest.approx(0.9640275800758169)

    def test_ranking_orients_toward_predicted_class(self):
        # Predicted negative: margin -4+... x = (0,0,0) -> all trees 0, margin
        # -3, p < 0.5.  Toward class 0 the *least* positive attribution ranks
        # first, so rank 1 must pick protein (attribution -3 flips to +3).
        schema = level_schema()
        model = self._graded_model()
        x = np.asarray([[0.0, 0.0, 0.0]])
        mask = np.zeros_like(x, dtype=bool)
        attributions = np.asarray([[-1.0, -2.0, -3.0]])
        result = rank_delta_experiment(model, x, mask, schema, attributions, ranks=(1,))
        # Rank 1 = protein; == 0 perturbs to 1: margin -3 -> -2, both negative
        # predictions, delta = -(sigma(-3) - sigma(-2))
        #                    = sigma(2) - sigma(3) ... sign flip via y=-1:
        # p  = sigma(-3) = 0.04742587317756678
        # p' = sigma(-2) = 0.11920292202211755
        # delta = -(p - p') = 0.07177704884455077
        assert result.mean_delta_by_rank[1] == pytest.approx(0.07177704884455077)

    def test_shape_mismatch_rejected(self):
        schema = level_schema()
        model = self._graded_model()
        x = np.asarray([[1.0, 1.0, 1.0]])
        with pytest.raises(ValueError, match="shape"):
            rank_delta_experiment(
                model, x, np.zeros_like(x, dtype=bool), schema, np.zeros((1, 2))
            )


class TestRankExperimentResult:
    def test_strictly_decreasing_check(self):
        good = RankExperimentResult({1: 0.5, 3: 0.3, 5: 0.1}, n_instances=10)
        assert good.is_strictly_decreasing((1, 3, 5))
        bad = RankExperimentResult({1: 0.5, 3: 0.3, 5: 0.31}, n_instances=10)
        assert not bad.is_strictly_decreasing((1, 3, 5))
        flat = RankExperimentResult({1: 0.5, 3: 0.5}, n_instances=10)
        assert not flat.is_strictly_decreasing((1, 3))
