"""Training, explanation, and feedback orchestration over the store.

pipeline_train fits one informativeness model per feedback mode from the
labeled events in the store and persists it with its feature schema and CV
report. The explanation path loads both mode models, attributes the event's
prediction in each mode, searches an anchor rule per mode, fuses the two
attributions into a saliency decision, and renders the feedback card.

Both modes always share one feature schema (selected once on the pooled
labeled set when selection is enabled), so per-mode attributions are
comparable column by column.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .anchors import AnchorConfig, AnchorRule, find_anchor
from .attribution import (
    ShapAttribution,
    TreeShapExplainer,
    global_shap_summary,
    subsample_background,
)
from .cards import FeedbackCard, assemble_card, assemble_full_card
from .config import EngineConfig
from .domain import FeedbackMode, TrackedEvent
from .features import (
    FeatureSchema,
    FeatureVector,
    default_schema,
    extract_stream,
    full_schema,
    select_features_mi,
    select_features_rfe,
    stack_vectors,
)
from .gbt import GBTModel, fit_gbt
from .metrics import CVReport, ModelSpec, cross_validate
from .saliency import ModeWeights, SaliencyReport, assemble_report
from .store import LabeledExample, NotFoundError, Store, StoredModel, iso_week_of

MODES = (FeedbackMode.MANUAL.value, FeedbackMode.AUTO.value)


class MissingModelError(LookupError):
    """A feedback/explanation request needs a model that is not trained."""


# --------------------------------------------------------------- training


@dataclass(frozen=True)
class ModeTrainOutcome:
    """What happened to one mode during a training run."""

    mode: str
    trained: bool
    n_labels: int
    reason: str | None = None
    cv: CVReport | None = None
    model_fingerprint: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "trained": self.trained,
            "n_labels": self.n_labels,
            "reason": self.reason,
            "cv": self.cv.to_dict() if self.cv is not None else None,
            "model_fingerprint": self.model_fingerprint,
        }


@dataclass(frozen=True)
class TrainReport:
    """Deterministic summary of one pipeline_train run (no wall-clock)."""

    outcomes: tuple[ModeTrainOutcome, ...]
    schema_fingerprint: str | None
    n_features: int | None

    @property
    def any_trained(self) -> bool:
        return any(o.trained for o in self.outcomes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": 1,
            "outcomes": [o.to_dict() for o in self.outcomes],
            "schema_fingerprint": self.schema_fingerprint,
            "n_features": self.n_features,
        }


def _extract_labeled(
    store: Store, examples: Sequence[LabeledExample], schema: FeatureSchema
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Feature rows for labeled events, using each user's full stream as
    temporal context (history is not limited to labeled meals)."""
    wanted = {ex.event.event_id: ex.label for ex in examples}
    users = sorted({ex.event.user_id for ex in examples})
    rows: list[FeatureVector] = []
    labels: list[float] = []
    for user_id in users:
        stream = store.events_for_user(user_id)
        profile = store.get_profile(user_id)
        for vec in extract_stream(stream, profile, schema):
            if vec.event_id in wanted:
                rows.append(vec)
                labels.append(float(wanted[vec.event_id]))
    x, mask = stack_vectors(rows)
    return x, mask, np.asarray(labels, dtype=np.float64)


def _select_schema(store: Store, config: EngineConfig) -> FeatureSchema:
    """The shared feature schema for this training run."""
    if config.feature_selection == "default":
        return default_schema()
    pooled = store.labeled_examples()
    universe = full_schema()
    x, mask, y = _extract_labeled(store, pooled, universe)
    if config.feature_selection == "mi":
        schema, _scores = select_features_mi(x, y, universe, target_k=30)
        return schema
    return select_features_rfe(x, y, universe, target_k=30, mask=mask, seed=config.seed)


def model_fingerprint(payload: str) -> str:
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def pipeline_train(
    store: Store, config: EngineConfig, trained_at: int | None = None
) -> TrainReport:
    """Train + persist one model per mode that meets the label floor.

    Modes under the floor are skipped with a reason instead of failing the
    run. Deterministic given store content and config seed: the persisted
    model payloads are byte-identical across re-runs.
    """
    per_mode = {mode: store.labeled_examples(mode) for mode in MODES}
    eligible = [m for m in MODES if len(per_mode[m]) >= config.min_labels_per_mode]
    outcomes: list[ModeTrainOutcome] = []
    schema: FeatureSchema | None = None
    if eligible:
        schema = _select_schema(store, config)
    stamp = int(time.time()) if trained_at is None else int(trained_at)
    for mode in MODES:
        examples = per_mode[mode]
        if mode not in eligible:
            outcomes.append(
                ModeTrainOutcome(
                    mode=mode,
                    trained=False,
                    n_labels=len(examples),
                    reason=(
                        f"needs at least {config.min_labels_per_mode} labeled events,"
                        f" found {len(examples)}"
                    ),
                )
            )
            continue
        assert schema is not None
        x, mask, y = _extract_labeled(store, examples, schema)
        model = fit_gbt(
            x,
            y,
            config.train_config(),
            mask=mask,
            feature_names=schema.names,
            schema_fingerprint=schema.fingerprint,
            mode=mode,
        )
        cv = cross_validate(
            x,
            y,
            ModelSpec("gbt", config.train_config()),
            k=config.cv_folds,
            seed=config.seed,
            mask=mask,
        )
        payload = model.to_json()
        store.put_model(
            mode,
            payload=payload,
            schema_json=json.dumps(schema.to_json_dict(), sort_keys=True),
            cv_json=json.dumps(cv.to_dict(), sort_keys=True),
            n_labels=len(examples),
            trained_at=stamp,
        )
        outcomes.append(
            ModeTrainOutcome(
                mode=mode,
                trained=True,
                n_labels=len(examples),
                cv=cv,
                model_fingerprint=model_fingerprint(payload),
            )
        )
    return TrainReport(
        outcomes=tuple(outcomes),
        schema_fingerprint=schema.fingerprint if schema is not None else None,
        n_features=len(schema) if schema is not None else None,
    )


# ------------------------------------------------------------ explanation


@dataclass
class PreparedMode:
    """One mode's model plus the reusable explanation machinery."""

    mode: str
    model: GBTModel
    schema: FeatureSchema
    stored: StoredModel
    background_x: np.ndarray
    background_mask: np.ndarray
    source_x: np.ndarray
    source_mask: np.ndarray
    explainer: TreeShapExplainer


class Runtime:
    """Serving-side cache: prepared per-mode explanation state.

    Reload is automatic — the cache key includes the stored payload hash, so
    a model swap invalidates the old entry on the next request.
    """

    def __init__(self, store: Store, config: EngineConfig):
        self.store = store
        self.config = config
        self._cache: dict[str, PreparedMode] = {}

    def prepared(self, mode: str) -> PreparedMode:
        stored = self.store.get_model(mode)
        if stored is None:
            raise MissingModelError(f"no trained model for mode {mode!r}")
        hit = self._cache.get(mode)
        if hit is not None and hit.stored.payload == stored.payload:
            return hit
        model = GBTModel.from_json(stored.payload)
        schema = FeatureSchema.from_json_dict(json.loads(stored.schema_json))
        examples = self.store.labeled_examples(mode)
        if examples:
            x, mask, _y = _extract_labeled(self.store, examples, schema)
        else:
            x = np.zeros((0, len(schema)))
            mask = np.zeros((0, len(schema)), dtype=bool)
        if x.shape[0] == 0:
            raise MissingModelError(
                f"mode {mode!r} has a model but no labeled events to explain against"
            )
        bg_x, bg_mask = subsample_background(
            x, mask, cap=self.config.background_cap, seed=self.config.seed
        )
        prep = PreparedMode(
            mode=mode,
            model=model,
            schema=schema,
            stored=stored,
            background_x=bg_x,
            background_mask=bg_mask,
            source_x=x,
            source_mask=mask,
            explainer=TreeShapExplainer(model, bg_x, bg_mask),
        )
        self._cache[mode] = prep
        return prep

    def shared_schema(self) -> FeatureSchema:
        """The schema both mode models were trained with (they must agree)."""
        prep_m = self.prepared(FeedbackMode.MANUAL.value)
        prep_a = self.prepared(FeedbackMode.AUTO.value)
        if prep_m.schema.fingerprint != prep_a.schema.fingerprint:
            raise MissingModelError(
                "mode models were trained with different feature schemas;"
                " retrain both in one pipeline_train run"
            )
        return prep_m.schema


@dataclass(frozen=True)
class ModeExplanation:
    """One mode's view of one event."""

    mode: str
    probability: float
    attribution: ShapAttribution
    anchor: AnchorRule | None

    def to_dict(self, feature_names: Sequence[str]) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "probability": self.probability,
            "base_margin": self.attribution.base,
            "margin": self.attribution.margin,
            "phi": {
                name: float(v) for name, v in zip(feature_names, self.attribution.phi)
            },
            "anchor": self.anchor.to_dict() if self.anchor is not None else None,
        }


@dataclass(frozen=True)
class ExplanationBundle:
    """Everything the service returns for one event explanation."""

    event_id: str
    schema_fingerprint: str
    by_mode: Mapping[str, ModeExplanation]
    report: SaliencyReport
    card: FeedbackCard
    feature_names: tuple[str, ...] = field(default=())

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "format_version": 1,
            "event_id": self.event_id,
            "schema_fingerprint": self.schema_fingerprint,
            "modes": {
                mode: exp.to_dict(self.feature_names)
                for mode, exp in self.by_mode.items()
            },
            "report": self.report.to_json_dict(),
            "card": self.card.to_json_dict(),
        }


def _vector_for_event(
    store: Store, event: TrackedEvent, schema: FeatureSchema
) -> FeatureVector:
    stream = store.events_for_user(event.user_id)
    profile = store.get_profile(event.user_id)
    for vec in extract_stream(stream, profile, schema):
        if vec.event_id == event.event_id:
            return vec
    raise NotFoundError(f"event {event.event_id!r} missing from its user stream")


def _mode_weights(config: EngineConfig) -> ModeWeights:
    return ModeWeights(manual=config.alpha_manual, auto=config.alpha_auto)


def explain_event(
    runtime: Runtime, event_id: str, with_anchors: bool = True
) -> ExplanationBundle:
    """Full two-mode explanation of one stored event.

    Anchors are searched only for the modes that the saliency selection
    actually assigned (and only for Show decisions), because only those
    items render a why line.
    """
    store, config = runtime.store, runtime.config
    event = store.get_event(event_id)
    schema = runtime.shared_schema()
    vector = _vector_for_event(store, event, schema)

    probs: dict[str, float] = {}
    atts: dict[str, ShapAttribution] = {}
    for mode in MODES:
        prep = runtime.prepared(mode)
        probs[mode] = float(
            prep.model.predict_proba(vector.values[None, :], vector.mask[None, :])[0]
        )
        atts[mode] = prep.explainer.explain(
            vector.values, vector.mask, event_id=event_id
        )

    weights = _mode_weights(config)
    draft = assemble_report(
        event_id=event_id,
        p_manual=probs[FeedbackMode.MANUAL.value],
        p_auto=probs[FeedbackMode.AUTO.value],
        phi_manual=atts[FeedbackMode.MANUAL.value].phi,
        phi_auto=atts[FeedbackMode.AUTO.value].phi,
        schema=schema,
        weights=weights,
        k=config.top_k,
        threshold=config.show_threshold,
        mode_selection=config.mode_selection,
    )

    anchors: dict[str, AnchorRule | None] = {mode: None for mode in MODES}
    if with_anchors and draft.decision == "Show":
        needed = {item.mode.value for item in draft.selected}
        for mode in sorted(needed):
            prep = runtime.prepared(mode)
            if probs[mode] == 0.5:
                continue
            anchors[mode] = find_anchor(
                prep.model,
                vector.values,
                vector.mask,
                prep.source_x,
                prep.source_mask,
                schema,
                AnchorConfig(tau=config.tau, delta=config.delta, seed=config.seed),
            )

    report = assemble_report(
        event_id=event_id,
        p_manual=probs[FeedbackMode.MANUAL.value],
        p_auto=probs[FeedbackMode.AUTO.value],
        phi_manual=atts[FeedbackMode.MANUAL.value].phi,
        phi_auto=atts[FeedbackMode.AUTO.value].phi,
        schema=schema,
        weights=weights,
        k=config.top_k,
        threshold=config.show_threshold,
        anchor_manual=anchors[FeedbackMode.MANUAL.value],
        anchor_auto=anchors[FeedbackMode.AUTO.value],
        mode_selection=config.mode_selection,
    )
    card = assemble_card(report, vector, schema)
    by_mode = {
        mode: ModeExplanation(
            mode=mode,
            probability=probs[mode],
            attribution=atts[mode],
            anchor=anchors[mode],
        )
        for mode in MODES
    }
    return ExplanationBundle(
        event_id=event_id,
        schema_fingerprint=schema.fingerprint,
        by_mode=by_mode,
        report=report,
        card=card,
        feature_names=schema.names,
    )


def full_card(runtime: Runtime, event_id: str) -> FeedbackCard:
    """The on-demand expansion: every feature of the event, shown Auto."""
    event = runtime.store.get_event(event_id)
    schema = runtime.shared_schema()
    vector = _vector_for_event(runtime.store, event, schema)
    return assemble_full_card(vector, schema)


def resolve_week(store: Store, user_id: str, week: str | None = None) -> str | None:
    """An explicit ISO week passes through; None resolves to the user's most
    recent week of activity (None when the user has no events)."""
    if week is not None:
        return week
    events = store.events_for_user(user_id)
    if not events:
        return None
    return iso_week_of(max(e.timestamp for e in events))


def weekly_feedback(
    runtime: Runtime,
    user_id: str,
    week: str | None = None,
    with_anchors: bool = True,
) -> list[ExplanationBundle]:
    """Feedback cards for one ISO week of a user's events, newest first,
    defaulting to the user's most recent week. Omitted cards are included
    as stubs."""
    store = runtime.store
    if not store.has_user(user_id):
        raise NotFoundError(f"unknown user {user_id!r}")
    week = resolve_week(store, user_id, week)
    events = store.events_for_user_week(user_id, week) if week is not None else []
    ordered = sorted(events, key=lambda e: (-e.timestamp, e.event_id))
    return [explain_event(runtime, e.event_id, with_anchors=with_anchors) for e in ordered]


def global_shap_csv(runtime: Runtime, mode: str, max_instances: int = 200) -> str:
    """Per-event attribution table for one mode's training set, as CSV."""
    prep = runtime.prepared(mode)
    examples = runtime.store.labeled_examples(mode)
    event_ids = [ex.event.event_id for ex in examples]
    summary = global_shap_summary(
        prep.model,
        prep.source_x,
        prep.source_mask,
        event_ids,
        background_x=prep.background_x,
        background_mask=prep.background_mask,
        max_instances=max_instances,
        background_cap=runtime.config.background_cap,
        seed=runtime.config.seed,
    )
    return summary.to_csv()
