"""Exact interventional Shapley attributions for tree ensembles.

The coalition value of feature set S is the mean ensemble margin over a
background set, with features in S taken from the explained instance and
the rest from the background row:

    v(S) = mean_z margin(compose(x_S, z_notS))

Attributions live in margin (log-odds) space. phi_0 = v(empty set) is the
mean background margin, and phi_0 + sum_k phi_k equals margin(x) exactly.

shap_bruteforce enumerates all 2^M coalitions and is the oracle for small
M. TreeShapExplainer computes identical values in polynomial time by
walking each tree's root-to-leaf paths: for one background row, a leaf is
reached by a coalition iff every path feature on which instance and
background diverge is "on" (divergent features that must take the
instance's branch) or "off" (must take the background's branch), which
makes each leaf a weighted unanimity game with a closed-form Shapley value.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .features import FeatureVector
from .gbt import GBTModel, TreeNode

MAX_BRUTEFORCE_FEATURES = 15


@dataclass(frozen=True)
class ShapAttribution:
    """Per-feature Shapley values for one instance, in margin space."""

    phi: np.ndarray
    base: float
    margin: float
    event_id: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=np.float64))
        self.phi.setflags(write=False)

    def to_dict(self, feature_names: Sequence[str] | None = None) -> dict[str, Any]:
        d: dict[str, Any] = {
            "base": self.base,
            "margin": self.margin,
            "event_id": self.event_id,
        }
        if feature_names is not None:
            d["phi"] = {n: float(v) for n, v in zip(feature_names, self.phi)}
        else:
            d["phi"] = [float(v) for v in self.phi]
        return d


def _as_background(
    background_x: np.ndarray, background_mask: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray]:
    z = np.atleast_2d(np.asarray(background_x, dtype=np.float64))
    if background_mask is None:
        zm = np.zeros_like(z, dtype=bool)
    else:
        zm = np.atleast_2d(np.asarray(background_mask, dtype=bool))
    if zm.shape != z.shape:
        raise ValueError("background mask shape does not match background values")
    if z.shape[0] == 0:
        raise ValueError("background must be non-empty")
    return z, zm


def shap_bruteforce(
    model,
    x: np.ndarray,
    mask: np.ndarray | None,
    background_x: np.ndarray,
    background_mask: np.ndarray | None = None,
    event_id: str | None = None,
) -> ShapAttribution:
    """Exact Shapley values by full coalition enumeration. M <= 15 only."""
    x = np.asarray(x, dtype=np.float64).ravel()
    m = x.shape[0]
    if m > MAX_BRUTEFORCE_FEATURES:
        raise ValueError(
            f"brute force supports at most {MAX_BRUTEFORCE_FEATURES} features, got {m}"
        )
    xm = (
        np.zeros(m, dtype=bool)
        if mask is None
        else np.asarray(mask, dtype=bool).ravel()
    )
    z, zm = _as_background(background_x, background_mask)
    if z.shape[1] != m:
        raise ValueError("background width does not match instance")

    n_subsets = 1 << m
    v = np.empty(n_subsets, dtype=np.float64)
    for s in range(n_subsets):
        on = np.array([(s >> j) & 1 for j in range(m)], dtype=bool)
        comp = np.where(on[None, :], x[None, :], z)
        comp_mask = np.where(on[None, :], xm[None, :], zm)
        v[s] = float(np.mean(model.margin(comp, comp_mask)))

    fact = [math.factorial(i) for i in range(m + 1)]
    weight = [fact[s] * fact[m - 1 - s] / fact[m] for s in range(m)]
    phi = np.zeros(m, dtype=np.float64)
    for s in range(n_subsets):
        size = bin(s).count("1")
        for j in range(m):
            if not (s >> j) & 1:
                phi[j] += weight[size] * (v[s | (1 << j)] - v[s])
    return ShapAttribution(
        phi=phi, base=float(v[0]), margin=float(v[n_subsets - 1]), event_id=event_id
    )


def _leaf_paths(
    root: TreeNode,
) -> list[tuple[float, list[tuple[int, float, bool, bool]]]]:
    """All (leaf value, path constraints) pairs; a constraint is
    (feature, threshold, must_go_left, default_left)."""
    out: list[tuple[float, list[tuple[int, float, bool, bool]]]] = []
    stack: list[tuple[TreeNode, list[tuple[int, float, bool, bool]]]] = [(root, [])]
    while stack:
        node, constraints = stack.pop()
        if node.is_leaf:
            out.append((node.value, constraints))
            continue
        base = (node.feature, node.threshold, node.default_left)
        stack.append((node.left, constraints + [(base[0], base[1], True, base[2])]))
        stack.append((node.right, constraints + [(base[0], base[1], False, base[2])]))
    return out


def _constraint_satisfied(
    values: np.ndarray, masked: np.ndarray, thr: float, must_left: bool, default_left: bool
) -> np.ndarray:
    goes_left = np.where(masked, default_left, values < thr)
    return goes_left == must_left


@dataclass
class _LeafPlan:
    value: float
    features: np.ndarray  # (d,) feature indices, distinct
    constraints: list[list[tuple[float, bool, bool]]]  # per feature: (thr, must_left, default_left)
    z_ok: np.ndarray  # (d, B) background rows satisfying all of the feature's constraints


class TreeShapExplainer:
    """Interventional tree-path Shapley explainer bound to one background set.

    Background pass/fail bits per (leaf, path feature) are precomputed once,
    so explaining an instance costs O(trees * leaves * depth * |background|)
    vectorized operations.
    """

    def __init__(
        self,
        model: GBTModel,
        background_x: np.ndarray,
        background_mask: np.ndarray | None = None,
    ):
        self.model = model
        self.z, self.zm = _as_background(background_x, background_mask)
        if self.z.shape[1] != model.n_features:
            raise ValueError("background width does not match model")
        self.n_background = self.z.shape[0]
        self._plans: list[list[_LeafPlan]] = []
        max_path = 1
        for tree in model.trees:
            plans: list[_LeafPlan] = []
            for value, constraints in _leaf_paths(tree):
                feats = sorted({c[0] for c in constraints})
                per_feature: list[list[tuple[float, bool, bool]]] = []
                z_ok_rows: list[np.ndarray] = []
                for f in feats:
                    cs = [(thr, ml, dl) for (ff, thr, ml, dl) in constraints if ff == f]
                    per_feature.append(cs)
                    ok = np.ones(self.n_background, dtype=bool)
                    for thr, ml, dl in cs:
                        ok &= _constraint_satisfied(self.z[:, f], self.zm[:, f], thr, ml, dl)
                    z_ok_rows.append(ok)
                plans.append(
                    _LeafPlan(
                        value=value,
                        features=np.asarray(feats, dtype=int),
                        constraints=per_feature,
                        z_ok=(
                            np.stack(z_ok_rows)
                            if z_ok_rows
                            else np.zeros((0, self.n_background), dtype=bool)
                        ),
                    )
                )
                max_path = max(max_path, len(feats))
            self._plans.append(plans)
        # Shapley weights of unanimity games with blockers: a features must be
        # present, b must be absent. For a member of the "present" set the
        # weight is (a-1)! b! / (a+b)!; for a blocker it is a! (b-1)! / (a+b)!.
        size = max_path + 1
        fact = np.array([math.factorial(i) for i in range(2 * size + 1)], dtype=np.float64)
        self._w_pos = np.zeros((size + 1, size + 1), dtype=np.float64)
        self._w_neg = np.zeros((size + 1, size + 1), dtype=np.float64)
        for a in range(size + 1):
            for b in range(size + 1):
                if a + b == 0:
                    continue
                if a >= 1:
                    self._w_pos[a, b] = fact[a - 1] * fact[b] / fact[a + b]
                if b >= 1:
                    self._w_neg[a, b] = fact[a] * fact[b - 1] / fact[a + b]

    def explain(
        self, x: np.ndarray, mask: np.ndarray | None = None, event_id: str | None = None
    ) -> ShapAttribution:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape[0] != self.model.n_features:
            raise ValueError("instance width does not match model")
        xm = (
            np.zeros_like(x, dtype=bool)
            if mask is None
            else np.asarray(mask, dtype=bool).ravel()
        )
        lr = self.model.config.learning_rate
        phi = np.zeros(self.model.n_features, dtype=np.float64)
        base_acc = 0.0
        b_count = self.n_background
        for plans in self._plans:
            for plan in plans:
                d = plan.features.shape[0]
                if d == 0:
                    base_acc += plan.value * b_count
                    continue
                x_ok = np.empty(d, dtype=bool)
                for i in range(d):
                    ok = True
                    f = int(plan.features[i])
                    for thr, ml, dl in plan.constraints[i]:
                        side_left = dl if xm[f] else bool(x[f] < thr)
                        if side_left != ml:
                            ok = False
                            break
                    x_ok[i] = ok
                z_ok = plan.z_ok
                a_mat = x_ok[:, None] & ~z_ok
                b_mat = ~x_ok[:, None] & z_ok
                dead = (~x_ok[:, None] & ~z_ok).any(axis=0)
                alive = ~dead
                if not alive.any():
                    continue
                a_counts = a_mat.sum(axis=0)
                b_counts = b_mat.sum(axis=0)
                base_acc += plan.value * float(np.sum(alive & (a_counts == 0)))
                w_pos = self._w_pos[a_counts, b_counts]
                w_neg = self._w_neg[a_counts, b_counts]
                for i in range(d):
                    f = int(plan.features[i])
                    if x_ok[i]:
                        sel = a_mat[i] & alive
                        if sel.any():
                            phi[f] += plan.value * float(w_pos[sel].sum())
                    else:
                        sel = b_mat[i] & alive
                        if sel.any():
                            phi[f] -= plan.value * float(w_neg[sel].sum())
        phi *= lr / b_count
        base = self.model.base_score + lr * base_acc / b_count
        margin = float(self.model.margin(x[None, :], xm[None, :])[0])
        return ShapAttribution(phi=phi, base=base, margin=margin, event_id=event_id)


def shap_tree(
    model: GBTModel,
    x: np.ndarray,
    mask: np.ndarray | None,
    background_x: np.ndarray,
    background_mask: np.ndarray | None = None,
    event_id: str | None = None,
) -> ShapAttribution:
    """One-shot exact tree-path Shapley values (see TreeShapExplainer)."""
    return TreeShapExplainer(model, background_x, background_mask).explain(
        x, mask, event_id=event_id
    )


def subsample_background(
    x: np.ndarray,
    mask: np.ndarray | None,
    cap: int = 256,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministically cap a background set by row subsampling."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    m = (
        np.zeros_like(x, dtype=bool)
        if mask is None
        else np.atleast_2d(np.asarray(mask, dtype=bool))
    )
    if x.shape[0] <= cap:
        return x, m
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(x.shape[0], size=cap, replace=False))
    return x[rows], m[rows]


@dataclass(frozen=True)
class GlobalShapSummary:
    """Per-(instance, feature) attributions plus a mean-|phi| feature ranking."""

    feature_names: tuple[str, ...]
    event_ids: tuple[str, ...]
    values: np.ndarray  # (n, m) feature values
    phi: np.ndarray  # (n, m) attributions
    base: float

    @property
    def mean_abs_phi(self) -> np.ndarray:
        return np.abs(self.phi).mean(axis=0)

    def ranking(self) -> list[tuple[str, float]]:
        scores = self.mean_abs_phi
        order = sorted(range(len(self.feature_names)), key=lambda j: (-scores[j], j))
        return [(self.feature_names[j], float(scores[j])) for j in order]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["event_id", "feature", "value", "phi"])
        for i, event_id in enumerate(self.event_ids):
            for j, name in enumerate(self.feature_names):
                writer.writerow(
                    [event_id, name, repr(float(self.values[i, j])), repr(float(self.phi[i, j]))]
                )
        return buf.getvalue()


def global_shap_summary(
    model: GBTModel,
    x: np.ndarray,
    mask: np.ndarray | None,
    event_ids: Sequence[str],
    background_x: np.ndarray | None = None,
    background_mask: np.ndarray | None = None,
    max_instances: int = 200,
    background_cap: int = 256,
    seed: int = 0,
) -> GlobalShapSummary:
    """Attribute a set of instances against a shared background.

    The background defaults to the instances themselves, capped by
    deterministic subsampling.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    m = (
        np.zeros_like(x, dtype=bool)
        if mask is None
        else np.atleast_2d(np.asarray(mask, dtype=bool))
    )
    if background_x is None:
        bg_x, bg_m = subsample_background(x, m, cap=background_cap, seed=seed)
    else:
        bg_x, bg_m = _as_background(background_x, background_mask)
        bg_x, bg_m = subsample_background(bg_x, bg_m, cap=background_cap, seed=seed)
    n = min(x.shape[0], max_instances)
    explainer = TreeShapExplainer(model, bg_x, bg_m)
    phis = np.zeros((n, model.n_features), dtype=np.float64)
    base = 0.0
    for i in range(n):
        att = explainer.explain(x[i], m[i])
        phis[i] = att.phi
        base = att.base
    return GlobalShapSummary(
        feature_names=tuple(model.feature_names),
        event_ids=tuple(str(e) for e in list(event_ids)[:n]),
        values=x[:n].copy(),
        phi=phis,
        base=base,
    )


def explain_vector(
    explainer: TreeShapExplainer, vector: FeatureVector
) -> ShapAttribution:
    return explainer.explain(vector.values, vector.mask, event_id=vector.event_id)
