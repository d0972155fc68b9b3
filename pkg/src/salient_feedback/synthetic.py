"""Synthetic meal-stream generator with a planted labeling rule.

Annotation streams are sampled from configurable marginals, features are
extracted with the default schema, and the binary label is a threshold rule
(at least k of n predicates over named features; a plain conjunction when
k = n), optionally corrupted by symmetric label noise. The generator
returns the ground-truth rule so explanation quality can be scored against
it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domain import (
    COOKING_METHODS,
    FOOD_GROUPS,
    MACROS,
    AnnotationVector,
    FeedbackMode,
    MealType,
    TrackedEvent,
    UserProfile,
)
from .features import FeatureSchema, FeatureVector, default_schema, extract_stream, stack_vectors

_MEAL_TYPES = (MealType.BREAKFAST, MealType.LUNCH, MealType.DINNER, MealType.SNACK)
_MEAL_PROBS = (0.28, 0.30, 0.30, 0.12)


@dataclass(frozen=True)
class PlantedPredicate:
    """One conjunct of the planted rule, e.g. feature >= 1."""

    feature: str
    op: str
    threshold: float

    def __post_init__(self) -> None:
        if self.op not in (">=", "<=", "=="):
            raise ValueError(f"unsupported planted op {self.op!r}")

    def holds(self, col: np.ndarray) -> np.ndarray:
        if self.op == ">=":
            return col >= self.threshold
        if self.op == "<=":
            return col <= self.threshold
        return col == self.threshold

    def describe(self) -> str:
        return f"{self.feature} {self.op} {self.threshold:g}"


@dataclass(frozen=True)
class PlantedRule:
    """Threshold rule over named features: holds when at least
    ``min_satisfied`` of the predicates hold. The default (``min_satisfied is
    None``) requires all of them, i.e. a plain conjunction."""

    predicates: tuple[PlantedPredicate, ...]
    min_satisfied: int | None = None

    def __post_init__(self) -> None:
        if not 1 <= len(self.predicates) <= 8:
            raise ValueError("planted rule must have 1..8 predicates")
        if self.min_satisfied is not None and not 1 <= self.min_satisfied <= len(self.predicates):
            raise ValueError("min_satisfied must be in 1..len(predicates)")

    @property
    def required(self) -> int:
        return len(self.predicates) if self.min_satisfied is None else self.min_satisfied

    def evaluate(self, x: np.ndarray, schema: FeatureSchema) -> np.ndarray:
        hits = np.zeros(x.shape[0], dtype=np.int64)
        for pred in self.predicates:
            hits += pred.holds(x[:, schema.index_of(pred.feature)])
        return hits >= self.required

    def describe(self) -> str:
        body = " AND ".join(p.describe() for p in self.predicates)
        if self.required == len(self.predicates):
            return body
        return f"at least {self.required} of [{'; '.join(p.describe() for p in self.predicates)}]"


def default_rule() -> PlantedRule:
    """Default planted signal: a balanced-meal pattern that holds when at
    least 3 of 5 conditions are met (moderate calories, fat at most medium,
    fiber at least medium, vegetables present, high protein). Base rate is
    near 0.49 under the default marginals, so symmetric label noise leaves
    both classes well represented. The 3-of-5 threshold structure is richer
    than any single shallow decision path, which makes the dataset a fair
    probe of additive tree ensembles versus one tree or a linear model."""
    return PlantedRule(
        predicates=(
            PlantedPredicate("Meal Macros (Calorie level)", "==", 1.0),
            PlantedPredicate("Meal Macros (Fat level)", "<=", 1.0),
            PlantedPredicate("Meal Macros (Fiber level)", ">=", 1.0),
            PlantedPredicate("Meal Food Group (Vegetables)", "==", 1.0),
            PlantedPredicate("Meal Macros (Protein level)", ">=", 2.0),
        ),
        min_satisfied=3,
    )


@dataclass(frozen=True)
class Marginals:
    """Sampling distributions for annotation fields."""

    macro_level_probs: Mapping[str, tuple[float, float, float]] = field(
        default_factory=lambda: {m: (1 / 3, 1 / 3, 1 / 3) for m in MACROS}
    )
    group_probs: Mapping[str, float] = field(
        default_factory=lambda: {g: 0.45 for g in FOOD_GROUPS}
    )
    cooking_probs: Mapping[str, float] = field(
        default_factory=lambda: {c: 0.25 for c in COOKING_METHODS}
    )
    ingredient_mean: float = 5.0


@dataclass(frozen=True)
class SyntheticSpec:
    """Everything that determines a generated dataset, including the seed."""

    n_events: int = 2000
    n_users: int = 20
    noise_rate: float = 0.1
    seed: int = 7
    marginals: Marginals = field(default_factory=Marginals)
    rule: PlantedRule = field(default_factory=default_rule)

    def __post_init__(self) -> None:
        if self.n_events < self.n_users:
            raise ValueError("need at least one event per user")
        if not 0.0 <= self.noise_rate < 0.5:
            raise ValueError("noise_rate must be in [0, 0.5)")


@dataclass(frozen=True)
class SyntheticDataset:
    """Generated events plus extracted features and planted labels.

    y is the noisy training label; y_clean is the rule output before noise.
    modes assigns each user's events to one FeedbackMode (between-subjects).
    """

    spec: SyntheticSpec
    schema: FeatureSchema
    events: tuple[TrackedEvent, ...]
    profiles: Mapping[str, UserProfile]
    vectors: tuple[FeatureVector, ...]
    x: np.ndarray
    mask: np.ndarray
    y: np.ndarray
    y_clean: np.ndarray
    modes: tuple[str, ...]
    ratings: tuple[int, ...]


def _sample_annotation(rng: np.random.Generator, marg: Marginals) -> AnnotationVector:
    levels = {
        m: int(rng.choice(3, p=np.asarray(marg.macro_level_probs[m]))) for m in MACROS
    }
    groups = {g: bool(rng.random() < marg.group_probs[g]) for g in FOOD_GROUPS}
    cooking = {c: bool(rng.random() < marg.cooking_probs[c]) for c in COOKING_METHODS}
    return AnnotationVector(
        macro_levels=levels,
        food_groups=groups,
        food_group_count=sum(groups.values()),
        cooking_methods=cooking,
        ingredient_count=int(1 + rng.poisson(max(0.0, marg.ingredient_mean - 1.0))),
    )


def generate_synthetic_dataset(spec: SyntheticSpec) -> SyntheticDataset:
    """Deterministic in spec: equal specs yield byte-identical matrices."""
    rng = np.random.default_rng(spec.seed)
    schema = default_schema()
    per_user = [spec.n_events // spec.n_users] * spec.n_users
    for i in range(spec.n_events % spec.n_users):
        per_user[i] += 1

    events: list[TrackedEvent] = []
    profiles: dict[str, UserProfile] = {}
    user_modes: dict[str, str] = {}
    base_ts = 1_700_000_000
    for u in range(spec.n_users):
        user_id = f"user{u:03d}"
        profiles[user_id] = UserProfile(
            user_id=user_id,
            prior_habit_vegetables=int(rng.integers(0, 7)),
            prior_habit_fruits=int(rng.integers(0, 7)),
        )
        user_modes[user_id] = (
            FeedbackMode.MANUAL.value if rng.random() < 0.5 else FeedbackMode.AUTO.value
        )
        for i in range(per_user[u]):
            meal_type = _MEAL_TYPES[int(rng.choice(4, p=np.asarray(_MEAL_PROBS)))]
            events.append(
                TrackedEvent(
                    event_id=f"ev-{user_id}-{i:04d}",
                    user_id=user_id,
                    timestamp=base_ts + u * 1_000_000 + i * 21_600,
                    meal_type=meal_type,
                    annotations=_sample_annotation(rng, spec.marginals),
                )
            )

    vectors: list[FeatureVector] = []
    ordered_events: list[TrackedEvent] = []
    for u in range(spec.n_users):
        user_id = f"user{u:03d}"
        stream = [e for e in events if e.user_id == user_id]
        fvs = extract_stream(stream, profiles[user_id], schema)
        vectors.extend(fvs)
        ordered_events.extend(sorted(stream, key=lambda e: (e.timestamp, e.event_id)))

    x, mask = stack_vectors(vectors)
    y_clean = spec.rule.evaluate(x, schema).astype(np.float64)
    flips = rng.random(spec.n_events) < spec.noise_rate
    y = np.where(flips, 1.0 - y_clean, y_clean)

    # Ratings consistent with the noisy label: positive ratings iff y == 1.
    ratings = tuple(
        int(rng.integers(1, 3)) if y[i] == 1.0 else int(rng.integers(-2, 1))
        for i in range(spec.n_events)
    )
    modes = tuple(user_modes[e.user_id] for e in ordered_events)
    return SyntheticDataset(
        spec=spec,
        schema=schema,
        events=tuple(ordered_events),
        profiles=profiles,
        vectors=tuple(vectors),
        x=x,
        mask=mask,
        y=y,
        y_clean=y_clean,
        modes=modes,
        ratings=ratings,
    )


def rule_base_rate(
    rule: PlantedRule,
    marginals: Marginals | None = None,
    n: int = 50_000,
    seed: int = 123,
) -> float:
    """Monte-Carlo estimate of the rule's positive rate under the marginals."""
    spec = SyntheticSpec(
        n_events=n,
        n_users=max(1, n // 100),
        noise_rate=0.0,
        seed=seed,
        marginals=marginals if marginals is not None else Marginals(),
        rule=rule,
    )
    ds = generate_synthetic_dataset(spec)
    return float(ds.y_clean.mean())
