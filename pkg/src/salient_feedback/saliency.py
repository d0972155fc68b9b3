"""Saliency policy: when to show feedback, which features to include, why
each one matters, and how (in which mode) each item engages the user.

Per-mode attributions are fused by a weighted max:

    w_hat_k = max(alpha_manual * phi_k_manual, alpha_auto * phi_k_auto)

computed on attributions oriented toward the predicted class. Features
that are not actionable or whose fused weight is not strictly positive are
dropped; the top k survivors are selected in descending fused weight. The
weighted max subsumes the rule "drop features negative in both modes" for
positive alphas and pins down the degenerate cases: a zero alpha silences
that mode entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .anchors import AnchorRule, Predicate
from .domain import FeedbackMode
from .features import FeatureSchema

SHOW = "Show"
SKIP = "Skip"


@dataclass(frozen=True)
class ModeWeights:
    """Fusion weights per feedback mode. Defaults favor Auto slightly,
    reflecting its lower interaction cost."""

    manual: float = 1.0
    auto: float = 1.2

    def __post_init__(self) -> None:
        if self.manual < 0 or self.auto < 0:
            raise ValueError("mode weights must be non-negative")
        if self.manual == 0 and self.auto == 0:
            raise ValueError("at least one mode weight must be positive")

    def weight(self, mode: FeedbackMode) -> float:
        return self.manual if mode is FeedbackMode.MANUAL else self.auto


@dataclass(frozen=True)
class SelectedFeature:
    """One salient feature: fused weight, assigned mode, optional rule."""

    feature: str
    weight: float
    mode: FeedbackMode
    rule: Predicate | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature": self.feature,
            "weight": self.weight,
            "mode": self.mode.value,
            "rule": self.rule.to_dict() if self.rule else None,
        }


@dataclass(frozen=True)
class SaliencyReport:
    """Full saliency decision for one event, JSON-stable."""

    event_id: str
    decision: str
    confidences: Mapping[str, float]
    selected: tuple[SelectedFeature, ...]
    k: int
    event_mode: FeedbackMode

    def __post_init__(self) -> None:
        if self.decision not in (SHOW, SKIP):
            raise ValueError(f"decision must be {SHOW!r} or {SKIP!r}")
        if self.decision == SKIP and self.selected:
            raise ValueError("a skipped event cannot carry selected features")
        if len(self.selected) > self.k:
            raise ValueError("selection exceeds k")

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "format_version": 1,
            "event_id": self.event_id,
            "decision": self.decision,
            "confidences": dict(self.confidences),
            "selected": [s.to_dict() for s in self.selected],
            "k": self.k,
            "event_mode": self.event_mode.value,
        }


def decide_when(
    p_manual: float, p_auto: float, threshold: float = 0.5
) -> tuple[str, dict[str, float]]:
    """Show iff either mode's informativeness probability clears the threshold."""
    confidences = {
        FeedbackMode.MANUAL.value: float(p_manual),
        FeedbackMode.AUTO.value: float(p_auto),
    }
    decision = SHOW if max(p_manual, p_auto) >= threshold else SKIP
    return decision, confidences


def select_which(
    phi_manual: np.ndarray,
    phi_auto: np.ndarray,
    schema: FeatureSchema,
    weights: ModeWeights | None = None,
    k: int = 3,
    predicted_class: int = 1,
) -> list[SelectedFeature]:
    """Fuse per-mode attributions and pick the top-k actionable features.

    Orientation: attributions are flipped so positive always means "supports
    the predicted class". Assigned mode is the argmax of the alpha-scaled
    attribution, Auto winning exact ties. Scale-invariant: multiplying both
    alphas by c > 0 changes no selection and no assignment.
    """
    if weights is None:
        weights = ModeWeights()
    if k < 0:
        raise ValueError("k must be non-negative")
    phi_manual = np.asarray(phi_manual, dtype=np.float64).ravel()
    phi_auto = np.asarray(phi_auto, dtype=np.float64).ravel()
    if phi_manual.shape[0] != len(schema) or phi_auto.shape[0] != len(schema):
        raise ValueError("attribution width does not match schema")
    orient = 1.0 if predicted_class == 1 else -1.0
    scored: list[tuple[float, int, FeedbackMode]] = []
    for j, spec in enumerate(schema.features):
        if not spec.actionable:
            continue
        m_term = weights.manual * orient * phi_manual[j]
        a_term = weights.auto * orient * phi_auto[j]
        fused = max(m_term, a_term)
        if fused <= 0.0:
            continue
        mode = FeedbackMode.AUTO if a_term >= m_term else FeedbackMode.MANUAL
        scored.append((fused, j, mode))
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [
        SelectedFeature(feature=schema.features[j].name, weight=w, mode=mode)
        for w, j, mode in scored[:k]
    ]


def attach_why(
    selection: Sequence[SelectedFeature], anchor: AnchorRule
) -> list[SelectedFeature]:
    """Pair selected features with their anchor predicates where available.

    Features without a matching predicate keep rule=None; their displayed
    value serves as the implicit (equality) rule.
    """
    out: list[SelectedFeature] = []
    for item in selection:
        pred = anchor.predicate_for(item.feature)
        if pred is not None:
            out.append(
                SelectedFeature(
                    feature=item.feature, weight=item.weight, mode=item.mode, rule=pred
                )
            )
        else:
            out.append(item)
    return out


def decide_how_event(
    confidences: Mapping[str, float], weights: ModeWeights | None = None
) -> FeedbackMode:
    """Event-level mode choice: argmax of alpha-weighted mode confidence,
    Auto winning ties."""
    if weights is None:
        weights = ModeWeights()
    manual_score = weights.manual * confidences[FeedbackMode.MANUAL.value]
    auto_score = weights.auto * confidences[FeedbackMode.AUTO.value]
    return FeedbackMode.AUTO if auto_score >= manual_score else FeedbackMode.MANUAL


def assemble_report(
    event_id: str,
    p_manual: float,
    p_auto: float,
    phi_manual: np.ndarray | None,
    phi_auto: np.ndarray | None,
    schema: FeatureSchema,
    weights: ModeWeights | None = None,
    k: int = 3,
    threshold: float = 0.5,
    anchor_manual: AnchorRule | None = None,
    anchor_auto: AnchorRule | None = None,
    mode_selection: str = "per_feature",
) -> SaliencyReport:
    """End-to-end saliency decision for one event.

    mode_selection "per_feature" assigns each item's mode independently;
    "per_event" forces every item to the event-level mode choice.
    """
    if weights is None:
        weights = ModeWeights()
    if mode_selection not in ("per_feature", "per_event"):
        raise ValueError(f"unknown mode_selection {mode_selection!r}")
    decision, confidences = decide_when(p_manual, p_auto, threshold)
    event_mode = decide_how_event(confidences, weights)
    selected: tuple[SelectedFeature, ...] = ()
    if decision == SHOW and phi_manual is not None and phi_auto is not None:
        items = select_which(phi_manual, phi_auto, schema, weights, k=k)
        if mode_selection == "per_event":
            items = [
                SelectedFeature(feature=i.feature, weight=i.weight, mode=event_mode, rule=i.rule)
                for i in items
            ]
        by_mode: dict[FeedbackMode, AnchorRule | None] = {
            FeedbackMode.MANUAL: anchor_manual,
            FeedbackMode.AUTO: anchor_auto,
        }
        attached: list[SelectedFeature] = []
        for item in items:
            anchor = by_mode.get(item.mode)
            if anchor is not None:
                attached.extend(attach_why([item], anchor))
            else:
                attached.append(item)
        selected = tuple(attached)
    return SaliencyReport(
        event_id=event_id,
        decision=decision,
        confidences=confidences,
        selected=selected,
        k=k,
        event_mode=event_mode,
    )
