"""Saliency-correctness probes: how much does the prediction move when a
salient feature is pushed just past its rule threshold?

The signed prediction-confidence change for feature k with rule r_k is

    delta_p_k = y * (p - p_prime),  y = +1 if p > 0.5 else -1

where p_prime is the model's probability after moving feature k to the
nearest value violating r_k. The sign makes "higher = more influential on
the current prediction" regardless of the predicted class.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .anchors import Predicate
from .features import FeatureSchema, FeatureSpec


class DomainError(ValueError):
    """No value in the feature's domain can violate the rule."""


def _feature_domain(
    spec: FeatureSpec, observed: np.ndarray | None
) -> np.ndarray:
    if spec.domain is not None:
        return np.asarray(sorted(spec.domain), dtype=np.float64)
    if observed is None or observed.size == 0:
        raise DomainError(f"feature {spec.name!r} has no enumerable domain and no observations")
    return np.unique(np.asarray(observed, dtype=np.float64))


def nearest_violating_value(
    predicate: Predicate,
    spec: FeatureSpec,
    observed: np.ndarray | None = None,
) -> float:
    """The domain value closest to the rule boundary that violates it.

    For >= rules that is the largest domain value below the threshold; for
    <= rules the smallest above; for equality the nearest other value, the
    lower neighbor winning ties.
    """
    domain = _feature_domain(spec, observed)
    if predicate.op == ">=":
        below = domain[domain < predicate.threshold]
        if below.size == 0:
            raise DomainError(
                f"no value in {spec.name!r} domain violates {predicate.op} {predicate.threshold:g}"
            )
        return float(below.max())
    if predicate.op == "<=":
        above = domain[domain > predicate.threshold]
        if above.size == 0:
            raise DomainError(
                f"no value in {spec.name!r} domain violates {predicate.op} {predicate.threshold:g}"
            )
        return float(above.min())
    others = domain[domain != predicate.threshold]
    if others.size == 0:
        raise DomainError(f"feature {spec.name!r} has a single-point domain")
    gaps = np.abs(others - predicate.threshold)
    best = np.flatnonzero(gaps == gaps.min())
    return float(others[best[0]])


def signed_confidence_change(
    model,
    x: np.ndarray,
    mask: np.ndarray | None,
    schema: FeatureSchema,
    predicate: Predicate,
    observed: np.ndarray | None = None,
) -> float:
    """delta_p for one feature's rule; positive means the rule supports the
    current prediction."""
    x = np.asarray(x, dtype=np.float64).ravel()
    xm = np.zeros_like(x, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).ravel().copy()
    j = schema.index_of(predicate.feature)
    spec = schema.features[j]
    obs = observed[:, j] if observed is not None and observed.ndim == 2 else observed
    new_value = nearest_violating_value(predicate, spec, obs)
    p = float(model.predict_proba(x[None, :], xm[None, :])[0])
    x_prime = x.copy()
    x_prime[j] = new_value
    xm_prime = xm.copy()
    xm_prime[j] = False
    p_prime = float(model.predict_proba(x_prime[None, :], xm_prime[None, :])[0])
    y = 1.0 if p > 0.5 else -1.0
    return y * (p - p_prime)


def implicit_predicate(spec: FeatureSpec, value: float) -> Predicate:
    """Rule implied by just displaying the value: equality at the observed
    value. Used when no anchor predicate covers a ranked feature."""
    return Predicate(feature=spec.name, op="==", threshold=float(value))


@dataclass(frozen=True)
class RankExperimentResult:
    """Mean delta_p per attribution rank over a set of instances."""

    mean_delta_by_rank: Mapping[int, float]
    n_instances: int

    def is_strictly_decreasing(self, ranks: Sequence[int]) -> bool:
        vals = [self.mean_delta_by_rank[r] for r in ranks]
        return all(a > b for a, b in zip(vals, vals[1:]))


def rank_delta_experiment(
    model,
    x: np.ndarray,
    mask: np.ndarray,
    schema: FeatureSchema,
    attributions: np.ndarray,
    ranks: Sequence[int] = (1, 3, 5),
    rules: Sequence[Mapping[str, Predicate]] | None = None,
) -> RankExperimentResult:
    """Perturb the rank-r attributed feature of each instance and average
    the signed confidence change per rank.

    Features are ranked per instance by attribution toward the predicted
    class (descending). Each perturbed feature uses its anchor predicate
    when one is supplied, otherwise the implicit equality rule at its
    observed value.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    mask = np.atleast_2d(np.asarray(mask, dtype=bool))
    attributions = np.atleast_2d(np.asarray(attributions, dtype=np.float64))
    n = x.shape[0]
    if attributions.shape != x.shape:
        raise ValueError("attributions shape must match x")
    max_rank = max(ranks)
    sums = {r: 0.0 for r in ranks}
    counts = {r: 0 for r in ranks}
    probs = model.predict_proba(x, mask)
    for i in range(n):
        toward = attributions[i] if probs[i] > 0.5 else -attributions[i]
        order = np.argsort(-toward, kind="stable")
        if toward[order[max_rank - 1]] == -np.inf:
            continue
        for r in ranks:
            j = int(order[r - 1])
            spec = schema.features[j]
            rule = None
            if rules is not None:
                rule = rules[i].get(spec.name)
            if rule is None:
                rule = implicit_predicate(spec, float(x[i, j]))
            try:
                delta = signed_confidence_change(
                    model, x[i], mask[i], schema, rule, observed=x
                )
            except DomainError:
                continue
            sums[r] += delta
            counts[r] += 1
    means = {r: (sums[r] / counts[r] if counts[r] else float("nan")) for r in ranks}
    return RankExperimentResult(mean_delta_by_rank=means, n_instances=n)
