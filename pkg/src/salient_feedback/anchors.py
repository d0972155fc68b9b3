"""Anchor rules: predicate conjunctions that lock in the model's prediction.

A rule anchors an instance when perturbations that keep the rule satisfied
almost always leave the predicted class unchanged. Precision is estimated
by sampling perturbations (rule features redrawn from source rows that
satisfy the rule, everything else resampled freely) and bounded with
Hoeffding-style sequential confidence intervals. Beam search grows rules
one predicate at a time and accepts the shortest rule whose precision
lower bound clears the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from .features import FeatureSchema, FeatureSpec, ValueKind

# Risk budget split evenly over this many candidate evaluations (union bound).
MAX_CANDIDATE_EVALS = 400


@dataclass(frozen=True)
class Predicate:
    """Single comparison over one named feature."""

    feature: str
    op: str  # ">=", "<=", "=="
    threshold: float

    def __post_init__(self) -> None:
        if self.op not in (">=", "<=", "=="):
            raise ValueError(f"unsupported predicate op {self.op!r}")

    def holds(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if self.op == ">=":
            return values >= self.threshold
        if self.op == "<=":
            return values <= self.threshold
        return values == self.threshold

    def holds_scalar(self, value: float) -> bool:
        return bool(self.holds(np.asarray([value]))[0])

    def to_dict(self) -> dict[str, Any]:
        return {"feature": self.feature, "op": self.op, "threshold": self.threshold}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Predicate":
        return cls(feature=d["feature"], op=d["op"], threshold=float(d["threshold"]))


@dataclass(frozen=True)
class AnchorConfig:
    """Search budget and statistical guarantees for anchor construction."""

    tau: float = 0.95
    delta: float = 0.05
    beam_width: int = 2
    max_predicates: int = 4
    budget_per_candidate: int = 10_000
    batch_size: int = 250
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must be in [0, 1]")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")


@dataclass(frozen=True)
class AnchorRule:
    """Search result: the predicates plus the statistical evidence for them.

    proven is True when the precision lower bound cleared tau within budget;
    otherwise the rule is the best effort found and must not be presented as
    a guarantee.
    """

    predicates: tuple[Predicate, ...]
    target_class: int
    precision: float
    lower_bound: float
    upper_bound: float
    coverage: float
    proven: bool
    n_samples: int

    def holds_row(self, values: np.ndarray, schema: FeatureSchema) -> bool:
        return all(
            p.holds_scalar(float(values[schema.index_of(p.feature)])) for p in self.predicates
        )

    def predicate_for(self, feature: str) -> Predicate | None:
        for p in self.predicates:
            if p.feature == feature:
                return p
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "predicates": [p.to_dict() for p in self.predicates],
            "target_class": self.target_class,
            "precision": self.precision,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "coverage": self.coverage,
            "proven": self.proven,
            "n_samples": self.n_samples,
        }


def candidate_predicates(x: np.ndarray, schema: FeatureSchema) -> list[Predicate]:
    """Instance-grounded predicate vocabulary.

    Binary-valued features contribute an equality test at the observed value;
    ordered features contribute >= and <= tests, skipping sides that are
    tautological at the edge of a known domain.
    """
    out: list[Predicate] = []
    for j, spec in enumerate(schema.features):
        v = float(x[j])
        if spec.kind is ValueKind.BINARY:
            out.append(Predicate(spec.name, "==", v))
            continue
        lo = min(spec.domain) if spec.domain else None
        hi = max(spec.domain) if spec.domain else None
        if lo is None or v > lo:
            out.append(Predicate(spec.name, ">=", v))
        if hi is None or v < hi:
            out.append(Predicate(spec.name, "<=", v))
    return out


class _PerturbationSampler:
    """Draws perturbed instances: one source row per sample, with each
    rule-constrained feature redrawn from source rows satisfying the rule's
    predicates on that feature (falling back to the instance's own value
    when no source row qualifies)."""

    def __init__(
        self,
        source_x: np.ndarray,
        source_mask: np.ndarray,
        schema: FeatureSchema,
        x: np.ndarray,
        x_mask: np.ndarray,
    ):
        self.source_x = source_x
        self.source_mask = source_mask
        self.schema = schema
        self.x = x
        self.x_mask = x_mask

    def sample(
        self, predicates: Sequence[Predicate], n: int, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        n_src = self.source_x.shape[0]
        rows = rng.integers(0, n_src, size=n)
        z = self.source_x[rows].copy()
        zm = self.source_mask[rows].copy()
        by_feature: dict[int, list[Predicate]] = {}
        for p in predicates:
            by_feature.setdefault(self.schema.index_of(p.feature), []).append(p)
        for j, preds in sorted(by_feature.items()):
            ok = np.ones(n_src, dtype=bool)
            for p in preds:
                ok &= p.holds(self.source_x[:, j])
            pool = np.flatnonzero(ok)
            if pool.size == 0:
                z[:, j] = self.x[j]
                zm[:, j] = self.x_mask[j]
            else:
                picks = pool[rng.integers(0, pool.size, size=n)]
                z[:, j] = self.source_x[picks, j]
                zm[:, j] = self.source_mask[picks, j]
        return z, zm


def _hoeffding_radius(n: int, delta: float) -> float:
    return math.sqrt(math.log(1.0 / delta) / (2.0 * n))


@dataclass
class _Candidate:
    predicates: tuple[Predicate, ...]
    successes: int = 0
    n: int = 0
    coverage: float = 0.0

    @property
    def estimate(self) -> float:
        return self.successes / self.n if self.n else 0.0

    def lower(self, delta: float) -> float:
        if self.n == 0:
            return 0.0
        return max(0.0, self.estimate - _hoeffding_radius(self.n, delta))

    def upper(self, delta: float) -> float:
        if self.n == 0:
            return 1.0
        return min(1.0, self.estimate + _hoeffding_radius(self.n, delta))


def _coverage(predicates: Sequence[Predicate], source_x: np.ndarray, schema: FeatureSchema) -> float:
    if not predicates:
        return 1.0
    ok = np.ones(source_x.shape[0], dtype=bool)
    for p in predicates:
        ok &= p.holds(source_x[:, schema.index_of(p.feature)])
    return float(ok.mean())


def find_anchor(
    model,
    x: np.ndarray,
    mask: np.ndarray | None,
    source_x: np.ndarray,
    source_mask: np.ndarray | None,
    schema: FeatureSchema,
    config: AnchorConfig | None = None,
) -> AnchorRule:
    """Beam-search the shortest proven anchor for the model's prediction at x.

    The instance satisfies every returned predicate by construction. Ties
    between proven rules of equal length break toward higher coverage. When
    the budget runs out before any rule is proven, the best estimate so far
    is returned with proven=False.
    """
    if config is None:
        config = AnchorConfig()
    x = np.asarray(x, dtype=np.float64).ravel()
    xm = np.zeros_like(x, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).ravel()
    source_x = np.atleast_2d(np.asarray(source_x, dtype=np.float64))
    source_mask = (
        np.zeros_like(source_x, dtype=bool)
        if source_mask is None
        else np.atleast_2d(np.asarray(source_mask, dtype=bool))
    )
    if source_x.shape[0] == 0:
        raise ValueError("perturbation source must be non-empty")
    if x.shape[0] != len(schema) or source_x.shape[1] != len(schema):
        raise ValueError("instance/source width does not match schema")

    p_x = float(model.predict_proba(x[None, :], xm[None, :])[0])
    if p_x == 0.5:
        raise ValueError("instance sits exactly on the decision boundary")
    target = int(p_x >= 0.5)

    rng = np.random.default_rng(config.seed)
    sampler = _PerturbationSampler(source_x, source_mask, schema, x, xm)
    delta_each = config.delta / MAX_CANDIDATE_EVALS

    def measure(cand: _Candidate) -> None:
        """Sequentially sample until proven, refuted, or out of budget."""
        while cand.n < config.budget_per_candidate:
            take = min(config.batch_size, config.budget_per_candidate - cand.n)
            z, zm = sampler.sample(cand.predicates, take, rng)
            pz = model.predict_proba(z, zm)
            cand.successes += int(np.sum((pz >= 0.5).astype(int) == target))
            cand.n += take
            if cand.lower(delta_each) >= config.tau or cand.upper(delta_each) < config.tau:
                return

    vocabulary = candidate_predicates(x, schema)
    empty = _Candidate(predicates=(), coverage=1.0)
    measure(empty)
    best_effort = empty

    def finish(cand: _Candidate, proven: bool) -> AnchorRule:
        return AnchorRule(
            predicates=cand.predicates,
            target_class=target,
            precision=cand.estimate,
            lower_bound=cand.lower(delta_each),
            upper_bound=cand.upper(delta_each),
            coverage=cand.coverage,
            proven=proven,
            n_samples=cand.n,
        )

    if empty.lower(delta_each) >= config.tau:
        return finish(empty, True)

    beam: list[_Candidate] = [empty]
    evals = 1
    for _ in range(config.max_predicates):
        seen: set[tuple[tuple[str, str, float], ...]] = set()
        extensions: list[_Candidate] = []
        for parent in beam:
            used = {(p.feature, p.op) for p in parent.predicates}
            for pred in vocabulary:
                if (pred.feature, pred.op) in used:
                    continue
                preds = tuple(
                    sorted(
                        parent.predicates + (pred,),
                        key=lambda p: (p.feature, p.op, p.threshold),
                    )
                )
                key = tuple((p.feature, p.op, p.threshold) for p in preds)
                if key in seen:
                    continue
                seen.add(key)
                extensions.append(
                    _Candidate(
                        predicates=preds,
                        coverage=_coverage(preds, source_x, schema),
                    )
                )
        if not extensions:
            break
        for cand in extensions:
            if evals >= MAX_CANDIDATE_EVALS:
                break
            measure(cand)
            evals += 1
        measured = [c for c in extensions if c.n > 0]
        if not measured:
            break
        def canon(c: _Candidate) -> tuple[tuple[str, str, float], ...]:
            return tuple((p.feature, p.op, p.threshold) for p in c.predicates)

        proven = [c for c in measured if c.lower(delta_each) >= config.tau]
        if proven:
            proven.sort(key=lambda c: (-c.coverage, -c.estimate, canon(c)))
            return finish(proven[0], True)
        measured.sort(key=lambda c: (-c.estimate, -c.coverage, canon(c)))
        if measured[0].estimate > best_effort.estimate:
            best_effort = measured[0]
        beam = measured[: config.beam_width]
        if evals >= MAX_CANDIDATE_EVALS:
            break
    return finish(best_effort, False)


def estimate_precision(
    model,
    rule: AnchorRule,
    x: np.ndarray,
    mask: np.ndarray | None,
    source_x: np.ndarray,
    source_mask: np.ndarray | None,
    schema: FeatureSchema,
    n_samples: int = 10_000,
    seed: int = 10_000_019,
) -> float:
    """Fresh-sample precision of a rule, independent of the search RNG."""
    x = np.asarray(x, dtype=np.float64).ravel()
    xm = np.zeros_like(x, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).ravel()
    source_x = np.atleast_2d(np.asarray(source_x, dtype=np.float64))
    source_mask = (
        np.zeros_like(source_x, dtype=bool)
        if source_mask is None
        else np.atleast_2d(np.asarray(source_mask, dtype=bool))
    )
    sampler = _PerturbationSampler(source_x, source_mask, schema, x, xm)
    rng = np.random.default_rng(seed)
    z, zm = sampler.sample(rule.predicates, n_samples, rng)
    pz = model.predict_proba(z, zm)
    return float(np.mean((pz >= 0.5).astype(int) == rule.target_class))
