"""Canonical data model for meal tracking events, annotations, and labels.

Everything downstream (feature extraction, learning, explanation, feedback
assembly) consumes these types. All types are immutable after construction
and serialize to/from plain dicts losslessly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Mapping

MACROS: tuple[str, ...] = ("calorie", "carbs", "protein", "fat", "fiber")

FOOD_GROUPS: tuple[str, ...] = ("grains", "vegetables", "meat", "fruits", "dairy")

COOKING_METHODS: tuple[str, ...] = (
    "baked",
    "pan_air_fried",
    "deep_fried",
    "steamed",
    "grilled",
    "boiled",
    "roasted",
    "microwaved",
    "raw",
)

RATING_MIN = -2
RATING_MAX = 2


class Level(IntEnum):
    """Three-point ordinal scale used for macronutrient amounts."""

    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @classmethod
    def from_any(cls, value: Any) -> "Level":
        """Coerce an int code or a case-insensitive word to a Level."""
        if isinstance(value, Level):
            return value
        if isinstance(value, bool):
            raise ValidationError(f"not a level: {value!r}")
        if isinstance(value, int):
            try:
                return cls(value)
            except ValueError:
                raise ValidationError(f"level code out of range: {value}") from None
        if isinstance(value, str):
            key = value.strip().upper()
            if key in cls.__members__:
                return cls[key]
            if key.isdigit() or (key.startswith("-") and key[1:].isdigit()):
                return cls.from_any(int(key))
        raise ValidationError(f"not a level: {value!r}")

    @property
    def label(self) -> str:
        return self.name.capitalize()


class Frequency(IntEnum):
    """Seven-point habit frequency scale, ordered from never to several times daily."""

    NEVER = 0
    LESS_THAN_WEEKLY = 1
    WEEKLY_1_TO_3 = 2
    WEEKLY_4_TO_6 = 3
    DAILY_1 = 4
    DAILY_2_TO_3 = 5
    DAILY_4_PLUS = 6

    @classmethod
    def from_any(cls, value: Any) -> "Frequency":
        if isinstance(value, Frequency):
            return value
        if isinstance(value, bool):
            raise ValidationError(f"not a frequency: {value!r}")
        if isinstance(value, int):
            try:
                return cls(value)
            except ValueError:
                raise ValidationError(f"frequency code out of range: {value}") from None
        if isinstance(value, str):
            key = value.strip().upper()
            if key in cls.__members__:
                return cls[key]
            if key.lstrip("-").isdigit():
                return cls.from_any(int(key))
        raise ValidationError(f"not a frequency: {value!r}")


class MealType(str, Enum):
    """Meal slot. Snacks count as a meal type of their own for same-type lookups."""

    BREAKFAST = "breakfast"
    LUNCH = "lunch"
    DINNER = "dinner"
    SNACK = "snack"


class FeedbackMode(str, Enum):
    """How feedback items engage the user.

    MANUAL items prompt the user to estimate the value themselves;
    AUTO items state the system-computed value outright.
    """

    MANUAL = "Manual"
    AUTO = "Auto"


class ValidationError(ValueError):
    """Raised when a record violates a domain invariant.

    Carries the full list of violations so callers can report every
    problem in one pass instead of failing one field at a time.
    """

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations: list[str] = violations if violations is not None else [message]


def _frozen_mapping(values: Mapping[str, Any]) -> Mapping[str, Any]:
    # Plain dict copy; fields on frozen dataclasses are rebind-proof and
    # the copy severs aliasing with caller-owned dicts.
    return dict(values)


@dataclass(frozen=True)
class AnnotationVector:
    """Per-meal annotations: macro levels, food groups, cooking methods, ingredients.

    Attributes:
        macro_levels: level code (0..2) per macro in MACROS.
        food_groups: presence flag per group in FOOD_GROUPS.
        food_group_count: number of distinct groups present; must equal the
            count of true flags.
        cooking_methods: presence flag per method in COOKING_METHODS.
        ingredient_count: number of distinct ingredients, >= 0.
    """

    macro_levels: Mapping[str, int]
    food_groups: Mapping[str, bool]
    food_group_count: int
    cooking_methods: Mapping[str, bool]
    ingredient_count: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "macro_levels", _frozen_mapping(self.macro_levels))
        object.__setattr__(self, "food_groups", _frozen_mapping(self.food_groups))
        object.__setattr__(self, "cooking_methods", _frozen_mapping(self.cooking_methods))

    def violations(self) -> list[str]:
        """Check every annotation invariant; returns one message per violation."""
        out: list[str] = []
        for m in MACROS:
            if m not in self.macro_levels:
                out.append(f"macro_levels missing {m!r}")
            else:
                v = self.macro_levels[m]
                if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v <= 2:
                    out.append(f"macro_levels[{m!r}] not a level code: {v!r}")
        for m in self.macro_levels:
            if m not in MACROS:
                out.append(f"macro_levels has unknown macro {m!r}")
        for g in FOOD_GROUPS:
            if g not in self.food_groups:
                out.append(f"food_groups missing {g!r}")
            elif not isinstance(self.food_groups[g], bool):
                out.append(f"food_groups[{g!r}] not a bool: {self.food_groups[g]!r}")
        for g in self.food_groups:
            if g not in FOOD_GROUPS:
                out.append(f"food_groups has unknown group {g!r}")
        true_count = sum(1 for g in FOOD_GROUPS if self.food_groups.get(g) is True)
        if self.food_group_count != true_count:
            out.append(
                f"food_group_count={self.food_group_count} but {true_count} groups are present"
            )
        for c in COOKING_METHODS:
            if c not in self.cooking_methods:
                out.append(f"cooking_methods missing {c!r}")
            elif not isinstance(self.cooking_methods[c], bool):
                out.append(f"cooking_methods[{c!r}] not a bool: {self.cooking_methods[c]!r}")
        for c in self.cooking_methods:
            if c not in COOKING_METHODS:
                out.append(f"cooking_methods has unknown method {c!r}")
        if not isinstance(self.ingredient_count, int) or isinstance(self.ingredient_count, bool):
            out.append(f"ingredient_count not an int: {self.ingredient_count!r}")
        elif self.ingredient_count < 0:
            out.append(f"ingredient_count negative: {self.ingredient_count}")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "macro_levels": dict(self.macro_levels),
            "food_groups": dict(self.food_groups),
            "food_group_count": self.food_group_count,
            "cooking_methods": dict(self.cooking_methods),
            "ingredient_count": self.ingredient_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AnnotationVector":
        return cls(
            macro_levels={k: int(v) for k, v in d["macro_levels"].items()},
            food_groups={k: bool(v) for k, v in d["food_groups"].items()},
            food_group_count=int(d["food_group_count"]),
            cooking_methods={k: bool(v) for k, v in d["cooking_methods"].items()},
            ingredient_count=int(d["ingredient_count"]),
        )


@dataclass(frozen=True)
class TrackedEvent:
    """One logged meal: identity, timing, meal slot, and its annotations.

    Attributes:
        event_id: globally unique id; ingestion deduplicates on it.
        user_id: owner of the event stream.
        timestamp: UTC epoch seconds.
        meal_type: which meal slot this event belongs to.
        annotations: the meal's AnnotationVector.
    """

    event_id: str
    user_id: str
    timestamp: int
    meal_type: MealType
    annotations: AnnotationVector

    def violations(self) -> list[str]:
        out: list[str] = []
        if not self.event_id or not isinstance(self.event_id, str):
            out.append(f"event_id empty or not a string: {self.event_id!r}")
        if not self.user_id or not isinstance(self.user_id, str):
            out.append(f"user_id empty or not a string: {self.user_id!r}")
        if not isinstance(self.timestamp, int) or isinstance(self.timestamp, bool):
            out.append(f"timestamp not epoch seconds: {self.timestamp!r}")
        if not isinstance(self.meal_type, MealType):
            out.append(f"meal_type not a MealType: {self.meal_type!r}")
        out.extend(self.annotations.violations())
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "user_id": self.user_id,
            "timestamp": self.timestamp,
            "meal_type": self.meal_type.value,
            "annotations": self.annotations.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TrackedEvent":
        return cls(
            event_id=str(d["event_id"]),
            user_id=str(d["user_id"]),
            timestamp=int(d["timestamp"]),
            meal_type=MealType(d["meal_type"]),
            annotations=AnnotationVector.from_dict(d["annotations"]),
        )


@dataclass(frozen=True)
class UserProfile:
    """Per-user prior eating habits, on the Frequency scale.

    Attributes:
        user_id: profile owner.
        prior_habit_vegetables: habitual vegetable intake frequency (0..6).
        prior_habit_fruits: habitual fruit intake frequency (0..6).
    """

    user_id: str
    prior_habit_vegetables: int
    prior_habit_fruits: int

    def violations(self) -> list[str]:
        out: list[str] = []
        if not self.user_id or not isinstance(self.user_id, str):
            out.append(f"user_id empty or not a string: {self.user_id!r}")
        for name in ("prior_habit_vegetables", "prior_habit_fruits"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v <= 6:
                out.append(f"{name} not a frequency code: {v!r}")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "user_id": self.user_id,
            "prior_habit_vegetables": self.prior_habit_vegetables,
            "prior_habit_fruits": self.prior_habit_fruits,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "UserProfile":
        return cls(
            user_id=str(d["user_id"]),
            prior_habit_vegetables=int(d["prior_habit_vegetables"]),
            prior_habit_fruits=int(d["prior_habit_fruits"]),
        )


@dataclass(frozen=True)
class InformativenessLabel:
    """Self-rated informativeness of one feedback event, plus its binary form.

    Attributes:
        event_id: the rated event.
        mode: which feedback mode produced the rated feedback.
        rating: 5-point bipolar rating in [-2, 2].
        label: True iff rating > 0.
    """

    event_id: str
    mode: FeedbackMode
    rating: int
    label: bool = field(default=False)

    def __post_init__(self) -> None:
        if not RATING_MIN <= self.rating <= RATING_MAX:
            raise ValidationError(
                f"rating {self.rating} out of range [{RATING_MIN}, {RATING_MAX}]"
                f" for event {self.event_id!r}"
            )
        object.__setattr__(self, "label", self.rating > 0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "mode": self.mode.value,
            "rating": self.rating,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "InformativenessLabel":
        return cls(
            event_id=str(d["event_id"]),
            mode=FeedbackMode(d["mode"]),
            rating=int(d["rating"]),
        )


def binarize_rating(rating: int, event_id: str | None = None) -> bool:
    """Map a bipolar rating in [-2, 2] to the binary informativeness label.

    The positive class is strictly positive ratings. Out-of-range ratings are
    rejected, never clamped.
    """
    if not isinstance(rating, int) or isinstance(rating, bool):
        where = f" for event {event_id!r}" if event_id else ""
        raise ValidationError(f"rating must be an integer{where}, got {rating!r}")
    if not RATING_MIN <= rating <= RATING_MAX:
        where = f" for event {event_id!r}" if event_id else ""
        raise ValidationError(
            f"rating {rating} out of range [{RATING_MIN}, {RATING_MAX}]{where}"
        )
    return rating > 0


def validate_event(event: TrackedEvent) -> TrackedEvent:
    """Return the event unchanged iff every domain invariant holds.

    Raises ValidationError listing each violated invariant otherwise.
    """
    problems = event.violations()
    if problems:
        raise ValidationError(
            f"event {event.event_id!r} failed validation: " + "; ".join(problems),
            violations=problems,
        )
    return event


def event_to_json(event: TrackedEvent) -> str:
    return json.dumps(event.to_dict(), sort_keys=True)


def event_from_json(payload: str) -> TrackedEvent:
    return TrackedEvent.from_dict(json.loads(payload))
