"""Classification metrics and stratified cross-validation.

pr_auc is average precision: the mean, over positives in ranked order, of
precision at that positive's rank. Ranking sorts scores descending with
ties kept in input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .baselines import fit_baseline
from .gbt import TrainConfig, fit_gbt

MODEL_KINDS = ("gbt", "logreg", "decision_tree", "random_forest")


@dataclass(frozen=True)
class Metrics:
    """Threshold metrics plus ranking quality for one evaluation.

    pr_auc is NaN when the labels contain no positives.
    """

    accuracy: float
    f1: float
    pr_auc: float
    tp: int
    fp: int
    tn: int
    fn: int
    n: int
    threshold: float = 0.5

    def to_dict(self) -> dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "f1": self.f1,
            "pr_auc": None if math.isnan(self.pr_auc) else self.pr_auc,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "n": self.n,
            "threshold": self.threshold,
        }


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """AP = sum over ranked positives of precision-at-that-rank / n_positives.

    Returns NaN when there are no positive labels.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    n_pos = int(labels.sum())
    if n_pos == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    hits = np.cumsum(ranked)
    ranks = np.arange(1, labels.shape[0] + 1)
    precision_at = hits / ranks
    return float(precision_at[ranked == 1].sum() / n_pos)


def compute_metrics(
    scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5
) -> Metrics:
    """Accuracy, F1, and average precision of scores against binary labels.

    Predictions are score >= threshold. F1 is defined as 0 when precision
    and recall are both 0.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-d arrays")
    if scores.shape[0] == 0:
        raise ValueError("empty inputs")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be binary 0/1")
    pred = (scores >= threshold).astype(int)
    tp = int(np.sum((pred == 1) & (labels == 1)))
    fp = int(np.sum((pred == 1) & (labels == 0)))
    tn = int(np.sum((pred == 0) & (labels == 0)))
    fn = int(np.sum((pred == 0) & (labels == 1)))
    n = labels.shape[0]
    accuracy = (tp + tn) / n
    denom = 2 * tp + fp + fn
    f1 = (2 * tp / denom) if denom > 0 else 0.0
    return Metrics(
        accuracy=accuracy,
        f1=f1,
        pr_auc=average_precision(scores, labels),
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        n=n,
        threshold=threshold,
    )


def stratified_folds(y: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Deterministic stratified fold assignment.

    Shuffles each class separately and deals indices round-robin, so per-fold
    class counts differ by at most one from an even split.
    """
    y = np.asarray(y).astype(int)
    if k < 2:
        raise ValueError("k must be >= 2")
    if y.shape[0] < k:
        raise ValueError("dataset smaller than fold count")
    rng = np.random.default_rng(seed)
    fold = np.empty(y.shape[0], dtype=int)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        fold[idx] = np.arange(idx.shape[0]) % k
    return fold


@dataclass(frozen=True)
class ModelSpec:
    """Which model to train during cross-validation."""

    kind: str
    config: TrainConfig = field(default_factory=TrainConfig)
    options: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")

    def fit(self, x: np.ndarray, y: np.ndarray, mask: np.ndarray | None = None):
        if self.kind == "gbt":
            return fit_gbt(x, y, self.config, mask=mask, **dict(self.options))
        return fit_baseline(self.kind, x, y, self.config, **dict(self.options))


@dataclass(frozen=True)
class CVReport:
    """Cross-validation result: pooled out-of-fold metrics, the field-wise
    mean over folds, and each fold's own metrics."""

    pooled: Metrics
    fold_mean: Metrics
    folds: tuple[Metrics, ...]
    k: int
    seed: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "pooled": self.pooled.to_dict(),
            "fold_mean": self.fold_mean.to_dict(),
            "folds": [f.to_dict() for f in self.folds],
            "k": self.k,
            "seed": self.seed,
        }


def _mean_metrics(folds: Sequence[Metrics]) -> Metrics:
    def mean_of(vals: list[float]) -> float:
        finite = [v for v in vals if not math.isnan(v)]
        return sum(finite) / len(finite) if finite else float("nan")

    return Metrics(
        accuracy=mean_of([f.accuracy for f in folds]),
        f1=mean_of([f.f1 for f in folds]),
        pr_auc=mean_of([f.pr_auc for f in folds]),
        tp=sum(f.tp for f in folds),
        fp=sum(f.fp for f in folds),
        tn=sum(f.tn for f in folds),
        fn=sum(f.fn for f in folds),
        n=sum(f.n for f in folds),
        threshold=folds[0].threshold,
    )


def cross_validate(
    x: np.ndarray,
    y: np.ndarray,
    spec: ModelSpec,
    k: int = 5,
    seed: int = 0,
    mask: np.ndarray | None = None,
    threshold: float = 0.5,
) -> CVReport:
    """Stratified k-fold cross-validation of one model spec."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y).astype(int)
    fold = stratified_folds(y, k, seed)
    oof = np.zeros(y.shape[0], dtype=np.float64)
    per_fold: list[Metrics] = []
    for f in range(k):
        test = fold == f
        train = ~test
        if y[train].min() == y[train].max():
            raise ValueError(f"fold {f} leaves a single-class training set")
        model = spec.fit(
            x[train], y[train].astype(float), mask[train] if mask is not None else None
        )
        p = model.predict_proba(x[test], mask[test] if mask is not None else None)
        oof[test] = p
        per_fold.append(compute_metrics(p, y[test], threshold))
    pooled = compute_metrics(oof, y, threshold)
    return CVReport(
        pooled=pooled,
        fold_mean=_mean_metrics(per_fold),
        folds=tuple(per_fold),
        k=k,
        seed=seed,
    )


def grid_search(
    x: np.ndarray,
    y: np.ndarray,
    kind: str,
    grid: Sequence[TrainConfig],
    k: int = 5,
    seed: int = 0,
    mask: np.ndarray | None = None,
    score: Callable[[CVReport], float] | None = None,
) -> tuple[TrainConfig, CVReport]:
    """Small exhaustive sweep over candidate configs; best pooled F1 wins,
    earlier candidates win ties."""
    if not grid:
        raise ValueError("empty grid")
    scorer = score if score is not None else (lambda rep: rep.pooled.f1)
    best: tuple[float, int, TrainConfig, CVReport] | None = None
    for i, cfg in enumerate(grid):
        report = cross_validate(x, y, ModelSpec(kind=kind, config=cfg), k=k, seed=seed, mask=mask)
        s = scorer(report)
        if best is None or s > best[0]:
            best = (s, i, cfg, report)
    return best[2], best[3]
