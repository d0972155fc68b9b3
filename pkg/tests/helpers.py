"""Shared builders for tests: hand-made events, trees, and tiny models.

Everything here is deliberately simple and independent of the library's
training code so tests can construct known-answer inputs by hand.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from salient_feedback.config import EngineConfig
from salient_feedback.domain import (
    COOKING_METHODS,
    FOOD_GROUPS,
    MACROS,
    AnnotationVector,
    MealType,
    TrackedEvent,
    UserProfile,
)
from salient_feedback.gbt import GBTModel, TrainConfig, TreeNode
from salient_feedback.store import Store


def annotations(
    macros: Mapping[str, int] | None = None,
    groups: Mapping[str, bool] | None = None,
    cooking: Mapping[str, bool] | None = None,
    ingredients: int = 5,
) -> AnnotationVector:
    """AnnotationVector with every field defaulted, overriding only what a
    test cares about. Default: all macros Medium, no groups, no cooking."""
    ml = {m: 1 for m in MACROS}
    ml.update(macros or {})
    fg = {g: False for g in FOOD_GROUPS}
    fg.update(groups or {})
    cm = {c: False for c in COOKING_METHODS}
    cm.update(cooking or {})
    return AnnotationVector(
        macro_levels=ml,
        food_groups=fg,
        food_group_count=sum(1 for v in fg.values() if v),
        cooking_methods=cm,
        ingredient_count=ingredients,
    )


def event(
    event_id: str,
    user_id: str = "u1",
    timestamp: int = 1_700_000_000,
    meal_type: MealType = MealType.LUNCH,
    **annot,
) -> TrackedEvent:
    return TrackedEvent(
        event_id=event_id,
        user_id=user_id,
        timestamp=timestamp,
        meal_type=meal_type,
        annotations=annotations(**annot),
    )


def profile(user_id: str = "u1", vegetables: int = 3, fruits: int = 2) -> UserProfile:
    return UserProfile(
        user_id=user_id,
        prior_habit_vegetables=vegetables,
        prior_habit_fruits=fruits,
    )


def leaf(value: float) -> TreeNode:
    return TreeNode(value=float(value))


def split(
    feature: int,
    threshold: float,
    left: TreeNode,
    right: TreeNode,
    default_left: bool = True,
    gain: float = 1.0,
) -> TreeNode:
    """Internal node: rows with feature < threshold go left."""
    return TreeNode(
        feature=int(feature),
        threshold=float(threshold),
        default_left=default_left,
        gain=gain,
        left=left,
        right=right,
    )


def manual_model(
    trees: Sequence[TreeNode],
    n_features: int,
    base: float = 0.0,
    learning_rate: float = 1.0,
    names: Sequence[str] | None = None,
    schema_fingerprint: str = "",
) -> GBTModel:
    """GBTModel assembled from hand-built trees (margin = base + lr * sum)."""
    feature_names = (
        tuple(names) if names is not None else tuple(f"f{j}" for j in range(n_features))
    )
    cfg = TrainConfig(n_trees=max(len(trees), 1), learning_rate=learning_rate)
    return GBTModel(
        config=cfg,
        base_score=float(base),
        trees=list(trees),
        feature_names=feature_names,
        schema_fingerprint=schema_fingerprint,
        n_train=0,
        class_prior=0.5,
    )


def random_tree(rng: np.random.Generator, n_features: int, depth: int) -> TreeNode:
    """Random binary tree with thresholds in (0, 1) and normal leaf values."""
    if depth == 0 or rng.random() < 0.25:
        return leaf(float(rng.normal()))
    return split(
        int(rng.integers(n_features)),
        float(np.round(rng.uniform(0.05, 0.95), 3)),
        random_tree(rng, n_features, depth - 1),
        random_tree(rng, n_features, depth - 1),
        default_left=bool(rng.random() < 0.5),
    )


def random_ensemble(
    rng: np.random.Generator, n_features: int, n_trees: int, max_depth: int
) -> GBTModel:
    trees = [random_tree(rng, n_features, max_depth) for _ in range(n_trees)]
    return manual_model(trees, n_features, base=float(rng.normal() * 0.3))


def indicator_model(feature_index: int, threshold: float, n_features: int, scale: float = 4.0) -> GBTModel:
    """Margin = +scale when feature >= threshold, else -scale. A pure
    single-feature indicator, handy as a known-answer explanation target."""
    tree = split(feature_index, threshold, leaf(-scale), leaf(scale))
    return manual_model([tree], n_features)


# --------------------------------------------------- seeded store population

BASE_TS = 1_700_000_000
DAY = 86_400
MEALS = (MealType.BREAKFAST, MealType.LUNCH, MealType.DINNER, MealType.SNACK)
UNLABELED_EVERY = 8  # every 8th event per user is stored without a rating


def _random_annotation_kwargs(rng: np.random.Generator) -> dict:
    return dict(
        macros={m: int(rng.integers(0, 3)) for m in MACROS},
        groups={g: bool(rng.integers(0, 2)) for g in FOOD_GROUPS},
        cooking={c: bool(rng.integers(0, 2)) for c in COOKING_METHODS},
        ingredients=int(rng.integers(1, 12)),
    )


def _rating_for(kw: dict) -> int:
    """Deterministic rating rule so tiny models have real signal to fit:
    high fat or vegetables present -> informative."""
    positive = kw["macros"]["fat"] == 2 or kw["groups"]["vegetables"]
    return 2 if positive else -2


def populate_user(
    store: Store,
    user_id: str,
    mode: str | None,
    n_events: int,
    rng: np.random.Generator,
    habits: tuple[int, int] = (3, 2),
) -> None:
    """One event per day starting at BASE_TS, most of them rated."""
    for i in range(n_events):
        kw = _random_annotation_kwargs(rng)
        ev = event(
            f"{user_id}-e{i:03d}",
            user_id=user_id,
            timestamp=BASE_TS + i * DAY,
            meal_type=MEALS[i % len(MEALS)],
            **kw,
        )
        rating = None if i % UNLABELED_EVERY == UNLABELED_EVERY - 1 else _rating_for(kw)
        store.add_ingest_row(
            ev,
            mode=mode,
            habit_vegetables=habits[0],
            habit_fruits=habits[1],
            rating=rating,
        )


def build_seeded_store(
    manual: int = 40, auto: int = 40, unmoded: int = 20, seed: int = 20240819
) -> Store:
    """In-memory store with a Manual user, an Auto user, and an unmoded one."""
    rng = np.random.default_rng(seed)
    store = Store(":memory:")
    populate_user(store, "u-manual", "Manual", manual, rng, habits=(4, 1))
    populate_user(store, "u-auto", "Auto", auto, rng, habits=(1, 5))
    if unmoded:
        populate_user(store, "u-new", None, unmoded, rng, habits=(2, 3))
    return store


def small_config(**overrides) -> EngineConfig:
    """EngineConfig sized for unit tests: tiny forest, low label floor."""
    base = dict(
        seed=7,
        n_trees=8,
        max_depth=3,
        min_labels_per_mode=10,
        cv_folds=2,
        background_cap=64,
        top_k=3,
    )
    base.update(overrides)
    return EngineConfig(**base)
