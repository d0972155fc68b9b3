"""Feedback card assembly and text rendering.

Cards come in three statuses: Full (every feature, grouped by category),
SalientOnly (just the selected features), and Omitted (a stub with
on-demand expansion). Auto items state the computed value; Manual items
prompt the user with choices that exactly cover the feature's answer
domain. A selected feature's anchor predicate renders as a "why" line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .anchors import Predicate
from .domain import (
    COOKING_METHODS,
    FOOD_GROUPS,
    MACROS,
    FeedbackMode,
    Frequency,
    Level,
    TrackedEvent,
)
from .features import Aggregator, FeatureSchema, FeatureSpec, FeatureVector, ValueKind, Window

OMITTED_STUB = "No salient feedback for this meal — tap to expand"

FULL = "Full"
SALIENT_ONLY = "SalientOnly"
OMITTED = "Omitted"

_MACRO_PHRASE = {
    "calorie": "calories",
    "carbs": "carbs",
    "protein": "protein",
    "fat": "fat",
    "fiber": "fiber",
}

_COOKING_PHRASE = {
    "baked": "Baked",
    "pan_air_fried": "Pan/Air Fried",
    "deep_fried": "Deep Fried",
    "steamed": "Steamed",
    "grilled": "Grilled",
    "boiled": "Boiled",
    "roasted": "Roasted",
    "microwaved": "Microwaved",
    "raw": "Raw",
}

_CHANGE_WORDS = {-1.0: "Decreased", 0.0: "Unchanged", 1.0: "Increased"}
_TREND_WORDS = ("Decreasing", "Unchanged", "Increasing")
_FREQUENCY_WORDS = {
    0: "Never",
    1: "Less than weekly",
    2: "1-3 times a week",
    3: "4-6 times a week",
    4: "Once a day",
    5: "2-3 times a day",
    6: "4+ times a day",
}


class DomainError(ValueError):
    """Answer falls outside the feature's domain.

    Carries the allowed answers (None for open numeric domains) so callers
    can echo the full domain back to the submitter.
    """

    def __init__(self, message: str, allowed: list[str] | None = None):
        super().__init__(message)
        self.allowed = allowed


def category_of(spec: FeatureSpec) -> str:
    base = spec.base
    if base.startswith("habit."):
        return "prior habits"
    if base.startswith("macro."):
        return "macronutrients"
    if base.startswith("group") or base == "group_count":
        return "food groups"
    if base.startswith("cooking."):
        return "cooking methods"
    return "ingredients"


def _spread_bucket(v: float) -> str:
    if v < 0.25:
        return "Low"
    if v < 0.45:
        return "Medium"
    return "High"


def _trend_word(v: float) -> str:
    if abs(v) < 1e-9:
        return _TREND_WORDS[1]
    return _TREND_WORDS[2] if v > 0 else _TREND_WORDS[0]


def _level_word(v: float) -> str:
    code = int(min(max(round(v), 0), 2))
    return Level(code).label


def value_label(spec: FeatureSpec, value: float) -> str:
    """Human display of a feature value, e.g. High, 3/4, Increased."""
    kind = spec.kind
    if kind is ValueKind.LEVEL or kind is ValueKind.LEVEL_MEAN:
        return _level_word(value)
    if kind is ValueKind.BINARY:
        return "Yes" if value >= 0.5 else "No"
    if kind is ValueKind.FRACTION:
        length = spec.window_length
        return f"{int(round(value * length))}/{length}"
    if kind is ValueKind.CHANGE:
        return _CHANGE_WORDS.get(float(np.sign(value)), "Unchanged")
    if kind is ValueKind.TREND:
        return _trend_word(value)
    if kind is ValueKind.SPREAD:
        return _spread_bucket(value)
    if kind is ValueKind.FREQUENCY:
        return _FREQUENCY_WORDS[int(min(max(round(value), 0), 6))]
    if kind is ValueKind.COUNT:
        return f"{int(round(value))}"
    return f"{value:g}"


def answer_label(spec: FeatureSpec, value: float) -> str:
    """Unambiguous label used for Manual answer choices: one label per
    domain value (numeric where words would collide)."""
    if spec.kind in (ValueKind.LEVEL_MEAN, ValueKind.COUNT_MEAN):
        return f"{value:g}"
    return value_label(spec, value)


def answer_choices(spec: FeatureSpec) -> list[str] | None:
    """The complete answer domain for a Manual prompt.

    None means the domain is open-ended (free non-negative numeric entry).
    Bucketed kinds (spread, trend) use their bucket words.
    """
    if spec.kind is ValueKind.SPREAD:
        return ["Low", "Medium", "High"]
    if spec.kind is ValueKind.TREND:
        return list(_TREND_WORDS)
    if spec.domain is None:
        return None
    return [answer_label(spec, v) for v in spec.domain]


def validate_answer(spec: FeatureSpec, answer: Any) -> str:
    """Normalize a submitted Manual answer to its canonical label.

    Raises DomainError (listing the allowed answers) when the answer falls
    outside the feature's domain.
    """
    choices = answer_choices(spec)
    text = str(answer).strip()
    if choices is not None:
        for c in choices:
            if text.lower() == c.lower():
                return c
        try:
            num = float(text)
        except ValueError:
            num = None
        if num is not None:
            if spec.domain is not None:
                for v, c in zip(spec.domain, choices):
                    if num == v:
                        return c
            elif spec.kind is ValueKind.TREND:
                return value_label(spec, num)
            elif spec.kind is ValueKind.SPREAD and num >= 0:
                # Raw dispersion values normalize through the same buckets
                # used for display.
                return value_label(spec, num)
        raise DomainError(
            f"answer {answer!r} outside domain of {spec.name!r}; allowed: {choices}",
            allowed=choices,
        )
    try:
        num = float(text)
    except ValueError:
        raise DomainError(f"answer {answer!r} is not numeric for {spec.name!r}") from None
    if num < 0:
        raise DomainError(f"answer {answer!r} negative for {spec.name!r}")
    return f"{num:g}"


def _base_phrase(spec: FeatureSpec) -> str:
    group, _, item = spec.base.partition(".")
    if group == "habit":
        return f"habitual {item[:-1] if item.endswith('s') else item} intake"
    if group == "macro":
        return f"{_MACRO_PHRASE[item]} level"
    if group == "group":
        return item
    if group == "cooking":
        return f"{_COOKING_PHRASE[item]} cooking"
    if spec.base == "group_count":
        return "food group count"
    return "ingredient count"


def _window_phrase(window: Window) -> str:
    if window is Window.PREV_SAME_MEAL_TYPE:
        return "vs the previous same-type meal"
    return f"over the recent {window.nominal_length} meals"


def subject_phrase(spec: FeatureSpec) -> str:
    """Lowercase noun phrase naming what a feature measures."""
    base = _base_phrase(spec)
    agg = spec.aggregator
    if agg is Aggregator.IDENTITY:
        return base
    w = _window_phrase(spec.window)
    if agg is Aggregator.MEAN:
        return f"{base} {w}"
    if agg is Aggregator.SD:
        return f"variation of {base} {w}"
    if agg is Aggregator.TREND:
        return f"trend of {base} {w}"
    if agg is Aggregator.CHANGE:
        return f"change in {base} {w}"
    return f"highest {base} {w}"


def auto_value_text(spec: FeatureSpec, value: float) -> str:
    """Auto item body: states the computed value."""
    label = value_label(spec, value)
    agg = spec.aggregator
    if agg is Aggregator.IDENTITY:
        group, _, item = spec.base.partition(".")
        if group == "macro":
            return f"{label} level of {_MACRO_PHRASE[item]}"
        if group == "group":
            return f"Contains {item}" if value >= 0.5 else f"No {item}"
        if group == "cooking":
            return f"{_COOKING_PHRASE[item]} cooking: {label}"
        if group == "habit":
            return f"Habitual intake: {label}"
        if spec.base == "group_count":
            return f"{label} food groups"
        return f"{label} ingredients"
    if agg is Aggregator.MEAN and spec.kind is ValueKind.FRACTION:
        group, _, item = spec.base.partition(".")
        length = spec.window_length
        noun = f"{_COOKING_PHRASE[item]} cooking" if group == "cooking" else item.capitalize()
        return f"{noun} in {label} of recent {length} meals"
    return f"{subject_phrase(spec).capitalize()}: {label}"


def prompt_text(spec: FeatureSpec) -> str:
    return f"Estimate the {subject_phrase(spec)}"


def why_text(spec: FeatureSpec, predicate: Predicate) -> str:
    """Render an anchor predicate, e.g. 'because fat level was High or above'."""
    label = value_label(spec, predicate.threshold)
    subject = subject_phrase(spec)
    if predicate.op == ">=":
        return f"because {subject} was {label} or above"
    if predicate.op == "<=":
        return f"because {subject} was {label} or below"
    return f"because {subject} was {label}"


@dataclass(frozen=True)
class FeedbackItem:
    """One card entry. Auto items carry a value; Manual items carry a prompt."""

    feature: str
    category: str
    mode: FeedbackMode
    text: str
    value: float | None = None
    value_display: str | None = None
    prompt: str | None = None
    choices: tuple[str, ...] | None = None
    why: str | None = None
    rule: Predicate | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature": self.feature,
            "category": self.category,
            "mode": self.mode.value,
            "text": self.text,
            "value": self.value,
            "value_display": self.value_display,
            "prompt": self.prompt,
            "choices": list(self.choices) if self.choices is not None else None,
            "why": self.why,
            "rule": self.rule.to_dict() if self.rule else None,
        }


@dataclass(frozen=True)
class FeedbackCard:
    """Renderable feedback for one event."""

    event_id: str
    status: str
    items: tuple[FeedbackItem, ...]
    on_demand_expansion: bool
    stub: str | None = None
    categories: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.status not in (FULL, SALIENT_ONLY, OMITTED):
            raise ValueError(f"unknown card status {self.status!r}")
        if self.status == OMITTED and self.items:
            raise ValueError("omitted cards carry no items")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "format_version": 1,
            "event_id": self.event_id,
            "status": self.status,
            "items": [i.to_dict() for i in self.items],
            "on_demand_expansion": self.on_demand_expansion,
            "stub": self.stub,
            "categories": list(self.categories),
        }


def _item_for(
    spec: FeatureSpec,
    value: float,
    mode: FeedbackMode,
    predicate: Predicate | None,
) -> FeedbackItem:
    why = why_text(spec, predicate) if predicate is not None else None
    if mode is FeedbackMode.MANUAL:
        choices = answer_choices(spec)
        return FeedbackItem(
            feature=spec.name,
            category=category_of(spec),
            mode=mode,
            text=prompt_text(spec),
            prompt=prompt_text(spec),
            choices=tuple(choices) if choices is not None else None,
            why=why,
            rule=predicate,
        )
    return FeedbackItem(
        feature=spec.name,
        category=category_of(spec),
        mode=mode,
        text=auto_value_text(spec, value),
        value=float(value),
        value_display=value_label(spec, value),
        why=why,
        rule=predicate,
    )


def assemble_card(report, vector: FeatureVector, schema: FeatureSchema) -> FeedbackCard:
    """Build the deliverable card for one event from its saliency report.

    Skip decisions produce an Omitted stub card; Show decisions produce a
    SalientOnly card with one item per selected feature, in report order.
    """
    if report.event_id != vector.event_id:
        raise ValueError("report and feature vector describe different events")
    if report.decision == "Skip":
        return FeedbackCard(
            event_id=report.event_id,
            status=OMITTED,
            items=(),
            on_demand_expansion=True,
            stub=OMITTED_STUB,
        )
    items: list[FeedbackItem] = []
    for sel in report.selected:
        j = schema.index_of(sel.feature)
        items.append(_item_for(schema.features[j], float(vector.values[j]), sel.mode, sel.rule))
    return FeedbackCard(
        event_id=report.event_id,
        status=SALIENT_ONLY,
        items=tuple(items),
        on_demand_expansion=True,
        categories=tuple(dict.fromkeys(i.category for i in items)),
    )


def assemble_full_card(
    vector: FeatureVector, schema: FeatureSchema, event_id: str | None = None
) -> FeedbackCard:
    """Every schema feature as an Auto item, grouped by category."""
    by_category: dict[str, list[FeedbackItem]] = {}
    for j, spec in enumerate(schema.features):
        item = _item_for(spec, float(vector.values[j]), FeedbackMode.AUTO, None)
        by_category.setdefault(item.category, []).append(item)
    ordered: list[FeedbackItem] = []
    categories: list[str] = []
    for cat in by_category:
        categories.append(cat)
        ordered.extend(by_category[cat])
    return FeedbackCard(
        event_id=event_id or vector.event_id,
        status=FULL,
        items=tuple(ordered),
        on_demand_expansion=False,
        categories=tuple(categories),
    )


def nutrition_baseline_card(event: TrackedEvent) -> FeedbackCard:
    """The fixed nutrition summary: 8 items in four categories
    (macronutrients, food groups, cooking methods, ingredients)."""
    ann = event.annotations
    items: list[FeedbackItem] = []
    for m in MACROS:
        lvl = Level(ann.macro_levels[m])
        items.append(
            FeedbackItem(
                feature=f"macro.{m}",
                category="macronutrients",
                mode=FeedbackMode.AUTO,
                text=f"{lvl.label} level of {_MACRO_PHRASE[m]}",
                value=float(lvl.value),
                value_display=lvl.label,
            )
        )
    present = [g for g in FOOD_GROUPS if ann.food_groups[g]]
    items.append(
        FeedbackItem(
            feature="group_count",
            category="food groups",
            mode=FeedbackMode.AUTO,
            text=(
                f"{ann.food_group_count} food groups: {', '.join(present)}"
                if present
                else "0 food groups"
            ),
            value=float(ann.food_group_count),
            value_display=str(ann.food_group_count),
        )
    )
    used = [_COOKING_PHRASE[c] for c in COOKING_METHODS if ann.cooking_methods[c]]
    items.append(
        FeedbackItem(
            feature="cooking_methods",
            category="cooking methods",
            mode=FeedbackMode.AUTO,
            text=f"Cooking: {', '.join(used)}" if used else "Cooking: none recorded",
            value=float(len(used)),
            value_display=", ".join(used) if used else "none",
        )
    )
    items.append(
        FeedbackItem(
            feature="ingredient_count",
            category="ingredients",
            mode=FeedbackMode.AUTO,
            text=f"{ann.ingredient_count} ingredients",
            value=float(ann.ingredient_count),
            value_display=str(ann.ingredient_count),
        )
    )
    return FeedbackCard(
        event_id=event.event_id,
        status=FULL,
        items=tuple(items),
        on_demand_expansion=False,
        categories=("macronutrients", "food groups", "cooking methods", "ingredients"),
    )


def render_text(card: FeedbackCard) -> list[str]:
    """Plain-text lines for terminal display. Total: every item renders."""
    lines = [f"[{card.status}] event {card.event_id}"]
    if card.status == OMITTED:
        lines.append(card.stub or OMITTED_STUB)
        return lines
    last_category: str | None = None
    for item in card.items:
        if card.status == FULL and item.category != last_category:
            lines.append(f"{item.category}:")
            last_category = item.category
        if item.mode is FeedbackMode.MANUAL:
            choice_str = " / ".join(item.choices) if item.choices else "(enter a number)"
            body = f"{item.prompt}: {choice_str}"
        else:
            body = item.text
        if item.why:
            body = f"{body} ({item.why})"
        lines.append(f"- {body}")
    return lines
