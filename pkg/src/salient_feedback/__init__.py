"""Salient feedback engine for meal self-tracking logs.

Predicts which tracked meals are worth reflecting on, explains each
prediction with exact interventional Shapley values and precision-bounded
anchor rules, fuses the two tracking modes' explanations into a short
salient-feature selection, and renders the result as feedback cards served
over HTTP or the CLI.
"""

from .anchors import AnchorConfig, AnchorRule, Predicate, estimate_precision, find_anchor
from .attribution import (
    GlobalShapSummary,
    ShapAttribution,
    TreeShapExplainer,
    global_shap_summary,
    shap_bruteforce,
    shap_tree,
    subsample_background,
)
from .baselines import CartModel, ForestModel, LogregModel, fit_baseline
from .cards import (
    DomainError,
    FeedbackCard,
    FeedbackItem,
    answer_choices,
    assemble_card,
    assemble_full_card,
    nutrition_baseline_card,
    render_text,
    validate_answer,
)
from .config import EngineConfig, dump_config, load_config, parse_config_text
from .correctness import (
    RankExperimentResult,
    nearest_violating_value,
    rank_delta_experiment,
    signed_confidence_change,
)
from .domain import (
    AnnotationVector,
    FeedbackMode,
    Frequency,
    InformativenessLabel,
    Level,
    MealType,
    TrackedEvent,
    UserProfile,
    ValidationError,
    binarize_rating,
    validate_event,
)
from .features import (
    Aggregator,
    FeatureSchema,
    FeatureSpec,
    FeatureVector,
    Window,
    default_schema,
    extract_stream,
    full_schema,
    select_features_mi,
    select_features_rfe,
    stack_vectors,
)
from .gbt import GBTModel, TrainConfig, fit_gbt, predict_event_proba
from .metrics import (
    CVReport,
    Metrics,
    ModelSpec,
    average_precision,
    compute_metrics,
    cross_validate,
    grid_search,
    stratified_folds,
)
from .pipeline import (
    ExplanationBundle,
    MissingModelError,
    Runtime,
    TrainReport,
    explain_event,
    full_card,
    global_shap_csv,
    pipeline_train,
    weekly_feedback,
)
from .saliency import (
    ModeWeights,
    SaliencyReport,
    SelectedFeature,
    assemble_report,
    decide_how_event,
    decide_when,
    select_which,
)
from .store import ConflictError, ElicitationRecord, NotFoundError, Store, iso_week_of
from .synthetic import (
    Marginals,
    PlantedPredicate,
    PlantedRule,
    SyntheticDataset,
    SyntheticSpec,
    default_rule,
    generate_synthetic_dataset,
    rule_base_rate,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
