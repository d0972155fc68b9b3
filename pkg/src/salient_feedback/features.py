"""Temporal feature extraction over per-user meal event streams.

A feature is (base annotation) x (aggregator) x (window). Windows look back
over the user's recent meals and always include the current one; aggregators
summarize the windowed values. The default schema is the 30-feature subset
used by the informativeness models; the full combinatorial universe is
available for feature selection.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .domain import (
    COOKING_METHODS,
    FOOD_GROUPS,
    MACROS,
    Frequency,
    Level,
    TrackedEvent,
    UserProfile,
)


class Window(Enum):
    """Lookback window. PrevN spans the n previous meals plus the current one;
    PrevSameMealType spans the most recent prior meal of the same type plus
    the current one."""

    PREV1 = "Prev1-Current"
    PREV2 = "Prev2-Current"
    PREV3 = "Prev3-Current"
    PREV_SAME_MEAL_TYPE = "PrevSameMealType-Current"

    @property
    def n_previous(self) -> int:
        return {"Prev1-Current": 1, "Prev2-Current": 2, "Prev3-Current": 3}.get(self.value, 1)

    @property
    def nominal_length(self) -> int:
        """Window length including the current meal."""
        return self.n_previous + 1


class Aggregator(Enum):
    IDENTITY = "Identity"
    MEAN = "Mean"
    SD = "SD"
    TREND = "Trend"
    CHANGE = "Change"
    HIGHEST = "Highest"


class ValueKind(Enum):
    """What a feature's numeric value denotes, for domains, prompts, rendering."""

    LEVEL = "level"
    LEVEL_MEAN = "level_mean"
    BINARY = "binary"
    FRACTION = "fraction"
    COUNT = "count"
    COUNT_MEAN = "count_mean"
    CHANGE = "change"
    TREND = "trend"
    SPREAD = "spread"
    FREQUENCY = "frequency"


# Base annotation registry: key -> (display name, kind, domain, actionable).
# Habits are profile-level and not actionable by a single meal choice.
_BASE_FIELDS: dict[str, tuple[str, str, tuple[float, ...] | None, bool]] = {}


def _register_bases() -> None:
    _BASE_FIELDS["habit.vegetables"] = (
        "Prior Eating Habit (Vegetables)", "frequency", tuple(float(i) for i in range(7)), False,
    )
    _BASE_FIELDS["habit.fruits"] = (
        "Prior Eating Habit (Fruits)", "frequency", tuple(float(i) for i in range(7)), False,
    )
    macro_words = {
        "calorie": "Calorie", "carbs": "Carbs", "protein": "Protein",
        "fat": "Fat", "fiber": "Fiber",
    }
    for m in MACROS:
        _BASE_FIELDS[f"macro.{m}"] = (
            f"Meal Macros ({macro_words[m]} level)", "level", (0.0, 1.0, 2.0), True,
        )
    group_words = {
        "grains": "Grains", "vegetables": "Vegetables", "meat": "Meat",
        "fruits": "Fruits", "dairy": "Dairy",
    }
    for g in FOOD_GROUPS:
        _BASE_FIELDS[f"group.{g}"] = (
            f"Meal Food Group ({group_words[g]})", "binary", (0.0, 1.0), True,
        )
    _BASE_FIELDS["group_count"] = (
        "Meal Food Groups Count", "count", tuple(float(i) for i in range(6)), True,
    )
    cooking_words = {
        "baked": "Baked", "pan_air_fried": "Pan/Air Fried", "deep_fried": "Deep Fried",
        "steamed": "Steamed", "grilled": "Grilled", "boiled": "Boiled",
        "roasted": "Roasted", "microwaved": "Microwaved", "raw": "Raw",
    }
    for c in COOKING_METHODS:
        _BASE_FIELDS[f"cooking.{c}"] = (
            f"Meal Cooking ({cooking_words[c]})", "binary", (0.0, 1.0), True,
        )
    _BASE_FIELDS["ingredient_count"] = ("Meal Ingredients Count", "count", None, True)


_register_bases()

BASE_KEYS: tuple[str, ...] = tuple(_BASE_FIELDS)

# Event-level bases, i.e. everything that varies meal to meal.
EVENT_BASE_KEYS: tuple[str, ...] = tuple(k for k in BASE_KEYS if not k.startswith("habit."))


def base_value(event: TrackedEvent, profile: UserProfile, key: str) -> float:
    group, _, item = key.partition(".")
    if group == "habit":
        if item == "vegetables":
            return float(profile.prior_habit_vegetables)
        return float(profile.prior_habit_fruits)
    if group == "macro":
        return float(event.annotations.macro_levels[item])
    if group == "group":
        return float(bool(event.annotations.food_groups[item]))
    if group == "cooking":
        return float(bool(event.annotations.cooking_methods[item]))
    if key == "group_count":
        return float(event.annotations.food_group_count)
    if key == "ingredient_count":
        return float(event.annotations.ingredient_count)
    raise KeyError(f"unknown base key {key!r}")


def _value_kind(base_kind: str, agg: Aggregator) -> ValueKind:
    if agg in (Aggregator.IDENTITY, Aggregator.HIGHEST):
        return {
            "level": ValueKind.LEVEL,
            "binary": ValueKind.BINARY,
            "count": ValueKind.COUNT,
            "frequency": ValueKind.FREQUENCY,
        }[base_kind]
    if agg is Aggregator.MEAN:
        return {
            "level": ValueKind.LEVEL_MEAN,
            "binary": ValueKind.FRACTION,
            "count": ValueKind.COUNT_MEAN,
            "frequency": ValueKind.COUNT_MEAN,
        }[base_kind]
    if agg is Aggregator.SD:
        return ValueKind.SPREAD
    if agg is Aggregator.TREND:
        return ValueKind.TREND
    return ValueKind.CHANGE


def _value_domain(
    base_domain: tuple[float, ...] | None, kind: ValueKind, window: Window | None
) -> tuple[float, ...] | None:
    if kind in (ValueKind.LEVEL, ValueKind.BINARY, ValueKind.COUNT, ValueKind.FREQUENCY):
        return base_domain
    if kind is ValueKind.CHANGE:
        return (-1.0, 0.0, 1.0)
    if kind in (ValueKind.FRACTION, ValueKind.LEVEL_MEAN, ValueKind.COUNT_MEAN):
        if base_domain is None or window is None:
            return None
        length = window.nominal_length
        hi = max(base_domain)
        values = sorted({round(i / length, 12) for i in range(int(hi * length) + 1)})
        return tuple(values)
    return None


@dataclass(frozen=True)
class FeatureSpec:
    """One column of the feature matrix.

    Attributes:
        name: paper-style display name, unique within a schema.
        base: base annotation key, e.g. "macro.fat".
        aggregator: how window values are summarized.
        window: lookback window; None for identity and habit features.
        kind: what the numeric value denotes.
        domain: enumerable output values, or None when open-ended.
        actionable: False for prior-habit features the user cannot change
            with a single meal.
    """

    name: str
    base: str
    aggregator: Aggregator
    window: Window | None
    kind: ValueKind
    domain: tuple[float, ...] | None
    actionable: bool

    @property
    def window_length(self) -> int:
        return self.window.nominal_length if self.window is not None else 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "base": self.base,
            "aggregator": self.aggregator.value,
            "window": self.window.value if self.window else None,
            "kind": self.kind.value,
            "domain": list(self.domain) if self.domain is not None else None,
            "actionable": self.actionable,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FeatureSpec":
        return cls(
            name=d["name"],
            base=d["base"],
            aggregator=Aggregator(d["aggregator"]),
            window=Window(d["window"]) if d.get("window") else None,
            kind=ValueKind(d["kind"]),
            domain=tuple(d["domain"]) if d.get("domain") is not None else None,
            actionable=bool(d["actionable"]),
        )


def make_feature(base: str, aggregator: Aggregator, window: Window | None) -> FeatureSpec:
    display, base_kind, base_domain, actionable = _BASE_FIELDS[base]
    if aggregator is Aggregator.IDENTITY:
        name = display
        kind = _value_kind(base_kind, aggregator)
        domain = base_domain
    else:
        if window is None:
            raise ValueError(f"aggregator {aggregator.value} requires a window")
        name = f"{display} : {aggregator.value}[{window.value}]"
        kind = _value_kind(base_kind, aggregator)
        domain = _value_domain(base_domain, kind, window)
    return FeatureSpec(
        name=name,
        base=base,
        aggregator=aggregator,
        window=window,
        kind=kind,
        domain=domain,
        actionable=actionable,
    )


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered, named collection of FeatureSpecs with a stable fingerprint."""

    features: tuple[FeatureSpec, ...]

    def __post_init__(self) -> None:
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate feature names in schema: {dupes}")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @property
    def fingerprint(self) -> str:
        digest = hashlib.sha256("\n".join(self.names).encode("utf-8")).hexdigest()
        return digest[:16]

    def index_of(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise KeyError(f"feature {name!r} not in schema")

    def get(self, name: str) -> FeatureSpec:
        return self.features[self.index_of(name)]

    def subset(self, indices: Sequence[int]) -> "FeatureSchema":
        return FeatureSchema(tuple(self.features[i] for i in indices))

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "format_version": 1,
            "fingerprint": self.fingerprint,
            "features": [f.to_dict() for f in self.features],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "FeatureSchema":
        return cls(tuple(FeatureSpec.from_dict(f) for f in d["features"]))


@dataclass(frozen=True)
class FeatureVector:
    """Extracted features for one event: values plus the missing-history mask.

    Masked entries hold the aggregate computed over the truncated window
    (just the current value when there is no history at all); the mask says
    which entries were truncated so models can route them separately.
    """

    event_id: str
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))
        self.values.setflags(write=False)
        self.mask.setflags(write=False)
        if self.values.shape != self.mask.shape:
            raise ValueError("values and mask shapes differ")


def default_schema() -> FeatureSchema:
    """The 30-feature schema used by the shipped informativeness models."""
    rows: list[tuple[str, Aggregator, Window | None]] = [
        ("habit.vegetables", Aggregator.IDENTITY, None),
        ("habit.fruits", Aggregator.IDENTITY, None),
        ("macro.calorie", Aggregator.IDENTITY, None),
        ("macro.carbs", Aggregator.IDENTITY, None),
        ("macro.protein", Aggregator.IDENTITY, None),
        ("macro.fat", Aggregator.IDENTITY, None),
        ("macro.fiber", Aggregator.IDENTITY, None),
        ("group.grains", Aggregator.IDENTITY, None),
        ("group.vegetables", Aggregator.IDENTITY, None),
        ("group.meat", Aggregator.IDENTITY, None),
        ("group.fruits", Aggregator.IDENTITY, None),
        ("group.dairy", Aggregator.IDENTITY, None),
        ("group_count", Aggregator.IDENTITY, None),
        ("cooking.baked", Aggregator.IDENTITY, None),
        ("macro.calorie", Aggregator.MEAN, Window.PREV1),
        ("macro.calorie", Aggregator.HIGHEST, Window.PREV3),
        ("macro.protein", Aggregator.HIGHEST, Window.PREV3),
        ("macro.fat", Aggregator.HIGHEST, Window.PREV3),
        ("macro.calorie", Aggregator.CHANGE, Window.PREV1),
        ("macro.fat", Aggregator.CHANGE, Window.PREV2),
        ("group.vegetables", Aggregator.CHANGE, Window.PREV2),
        ("group.vegetables", Aggregator.CHANGE, Window.PREV_SAME_MEAL_TYPE),
        ("ingredient_count", Aggregator.HIGHEST, Window.PREV2),
        ("cooking.microwaved", Aggregator.MEAN, Window.PREV1),
        ("cooking.microwaved", Aggregator.MEAN, Window.PREV3),
        ("cooking.pan_air_fried", Aggregator.MEAN, Window.PREV3),
        ("cooking.baked", Aggregator.SD, Window.PREV2),
        ("cooking.deep_fried", Aggregator.SD, Window.PREV2),
        ("cooking.raw", Aggregator.SD, Window.PREV3),
        ("cooking.steamed", Aggregator.TREND, Window.PREV3),
    ]
    return FeatureSchema(tuple(make_feature(b, a, w) for b, a, w in rows))


def full_schema() -> FeatureSchema:
    """The combinatorial feature universe: every event-level base crossed with
    every aggregator and window, plus identity and habit features."""
    specs: list[FeatureSpec] = [
        make_feature("habit.vegetables", Aggregator.IDENTITY, None),
        make_feature("habit.fruits", Aggregator.IDENTITY, None),
    ]
    for base in EVENT_BASE_KEYS:
        specs.append(make_feature(base, Aggregator.IDENTITY, None))
    aggs = (Aggregator.MEAN, Aggregator.SD, Aggregator.TREND, Aggregator.CHANGE, Aggregator.HIGHEST)
    for base in EVENT_BASE_KEYS:
        for agg in aggs:
            for window in Window:
                specs.append(make_feature(base, agg, window))
    return FeatureSchema(tuple(specs))


def _population_sd(vals: Sequence[float]) -> float:
    n = len(vals)
    if n <= 1:
        return 0.0
    mean = sum(vals) / n
    return math.sqrt(sum((v - mean) ** 2 for v in vals) / n)


def _slope(vals: Sequence[float]) -> float:
    """Least-squares slope of vals against positions 0..n-1."""
    n = len(vals)
    if n <= 1:
        return 0.0
    xm = (n - 1) / 2.0
    ym = sum(vals) / n
    denom = sum((i - xm) ** 2 for i in range(n))
    num = sum((i - xm) * (v - ym) for i, v in enumerate(vals))
    return num / denom


def _aggregate(agg: Aggregator, window_vals: Sequence[float]) -> float:
    cur = window_vals[-1]
    if agg is Aggregator.IDENTITY:
        return cur
    if agg is Aggregator.MEAN:
        return sum(window_vals) / len(window_vals)
    if agg is Aggregator.SD:
        return _population_sd(window_vals)
    if agg is Aggregator.TREND:
        return _slope(window_vals)
    if agg is Aggregator.HIGHEST:
        return max(window_vals)
    if agg is Aggregator.CHANGE:
        prior = window_vals[:-1]
        if not prior:
            return 0.0
        baseline = sum(prior) / len(prior)
        if cur > baseline:
            return 1.0
        if cur < baseline:
            return -1.0
        return 0.0
    raise ValueError(f"unknown aggregator {agg!r}")


def sort_stream(events: Iterable[TrackedEvent]) -> list[TrackedEvent]:
    """Chronological order with event_id tiebreak, for deterministic windows."""
    return sorted(events, key=lambda e: (e.timestamp, e.event_id))


def extract_stream(
    events: Iterable[TrackedEvent],
    profile: UserProfile,
    schema: FeatureSchema,
) -> list[FeatureVector]:
    """Extract one FeatureVector per event from a single user's stream.

    Events are sorted chronologically first. A feature whose window reaches
    further back than the available history is computed over the truncated
    window and flagged in the mask.
    """
    ordered = sort_stream(events)
    base_keys = sorted({f.base for f in schema.features})
    series: dict[str, list[float]] = {
        k: [base_value(e, profile, k) for e in ordered] for k in base_keys
    }
    # Index of the most recent prior event with the same meal type, or -1.
    prev_same: list[int] = []
    last_seen: dict[str, int] = {}
    for i, e in enumerate(ordered):
        prev_same.append(last_seen.get(e.meal_type.value, -1))
        last_seen[e.meal_type.value] = i

    out: list[FeatureVector] = []
    m = len(schema)
    for i, event in enumerate(ordered):
        values = np.zeros(m, dtype=np.float64)
        mask = np.zeros(m, dtype=bool)
        for j, spec in enumerate(schema.features):
            col = series[spec.base]
            if spec.window is None:
                values[j] = col[i]
                continue
            if spec.window is Window.PREV_SAME_MEAL_TYPE:
                k = prev_same[i]
                window_vals = [col[k], col[i]] if k >= 0 else [col[i]]
            else:
                n_prev = spec.window.n_previous
                start = max(0, i - n_prev)
                window_vals = col[start : i + 1]
            truncated = len(window_vals) < spec.window.nominal_length
            values[j] = _aggregate(spec.aggregator, window_vals)
            mask[j] = truncated
        out.append(FeatureVector(event_id=event.event_id, values=values, mask=mask))
    return out


def extract_for_users(
    events: Iterable[TrackedEvent],
    profiles: Mapping[str, UserProfile],
    schema: FeatureSchema,
) -> dict[str, FeatureVector]:
    """Extract features for a mixed-user event collection, keyed by event_id."""
    by_user: dict[str, list[TrackedEvent]] = {}
    for e in events:
        by_user.setdefault(e.user_id, []).append(e)
    out: dict[str, FeatureVector] = {}
    for user_id in sorted(by_user):
        if user_id not in profiles:
            raise KeyError(f"no profile for user {user_id!r}")
        for fv in extract_stream(by_user[user_id], profiles[user_id], schema):
            out[fv.event_id] = fv
    return out


def stack_vectors(vectors: Sequence[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    """Stack FeatureVectors into an (n, m) value matrix and mask matrix."""
    if not vectors:
        raise ValueError("no feature vectors to stack")
    x = np.stack([fv.values for fv in vectors])
    mask = np.stack([fv.mask for fv in vectors])
    return x, mask


def quartile_bin(col: np.ndarray) -> np.ndarray:
    """Discretize a column into at most four bins split at its quartiles."""
    col = np.asarray(col, dtype=np.float64)
    edges = np.quantile(col, (0.25, 0.5, 0.75))
    return np.searchsorted(edges, col, side="left")


def mutual_information_bits(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in mutual information of two discrete arrays, in bits."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("arrays must be the same length")
    n = a.shape[0]
    if n == 0:
        raise ValueError("empty arrays")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    joint = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.float64)
    np.add.at(joint, (ai, bi), 1.0)
    joint /= n
    pa = joint.sum(axis=1, keepdims=True)
    pb = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    ratio = joint[nz] / (pa @ pb)[nz]
    return float(np.sum(joint[nz] * np.log2(ratio)))


def select_features_mi(
    x: np.ndarray,
    y: np.ndarray,
    schema: FeatureSchema,
    target_k: int,
) -> tuple[FeatureSchema, list[float]]:
    """Rank features by plug-in MI with the label on quartile-binned columns.

    Returns the top-k features in descending MI order together with their
    scores. Ties keep the original schema order.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.shape[1] != len(schema):
        raise ValueError("matrix width does not match schema")
    if not 1 <= target_k <= len(schema):
        raise ValueError(f"target_k {target_k} out of range")
    scores = [mutual_information_bits(quartile_bin(x[:, j]), y) for j in range(x.shape[1])]
    order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))[:target_k]
    return schema.subset(order), [scores[j] for j in order]


def select_features_rfe(
    x: np.ndarray,
    y: np.ndarray,
    schema: FeatureSchema,
    target_k: int,
    mask: np.ndarray | None = None,
    step_fraction: float = 0.1,
    inner_config: "object | None" = None,
    seed: int = 0,
) -> FeatureSchema:
    """Recursive feature elimination with a boosted-tree inner model.

    Each round fits the inner model on the surviving columns, scores each
    column by its total split gain, and drops the lowest-scoring 10% of the
    remainder (at least one, never past target_k). Survivors come back in
    their original schema order.
    """
    from .gbt import TrainConfig, fit_gbt

    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[1] != len(schema):
        raise ValueError("matrix width does not match schema")
    if not 1 <= target_k <= len(schema):
        raise ValueError(f"target_k {target_k} out of range")
    cfg = inner_config if inner_config is not None else TrainConfig(seed=seed)
    active = list(range(len(schema)))
    while len(active) > target_k:
        sub_mask = mask[:, active] if mask is not None else None
        model = fit_gbt(x[:, active], y, cfg, mask=sub_mask)
        importance = model.feature_importance()
        n_drop = min(max(1, int(step_fraction * len(active))), len(active) - target_k)
        ranked = sorted(range(len(active)), key=lambda j: (importance[j], j))
        doomed = set(ranked[:n_drop])
        active = [col for j, col in enumerate(active) if j not in doomed]
    return schema.subset(active)
