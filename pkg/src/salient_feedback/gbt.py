"""Second-order gradient-boosted trees on logistic loss.

Greedy exact split search with Newton gradient/hessian statistics:

    gain = 1/2 * (G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam)) - gamma
    leaf value = -G / (H + lam)

The ensemble margin is base_score + learning_rate * sum of tree outputs,
and probabilities are the logistic of the margin. Rows whose feature is
masked (insufficient history) route down each split's learned default
branch instead of comparing the imputed value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

MARGIN_CLIP = 30.0


def sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    z = np.clip(z, -MARGIN_CLIP, MARGIN_CLIP)
    return 1.0 / (1.0 + np.exp(-z))


def log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-15, 1.0 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


@dataclass(frozen=True)
class TrainConfig:
    """Boosting hyperparameters.

    Attributes:
        n_trees: boosting rounds.
        max_depth: split levels per tree (0 means a single leaf).
        learning_rate: shrinkage applied to each tree's output.
        reg_lambda: L2 penalty on leaf values.
        min_split_gain: minimum gain (gamma) required to keep a split.
        min_child_weight: minimum hessian sum per child.
        subsample: row fraction sampled (without replacement) per tree.
        seed: RNG seed for subsampling.
    """

    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    min_split_gain: float = 0.0
    min_child_weight: float = 1.0
    subsample: float = 1.0
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "reg_lambda": self.reg_lambda,
            "min_split_gain": self.min_split_gain,
            "min_child_weight": self.min_child_weight,
            "subsample": self.subsample,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        return cls(
            n_trees=int(d["n_trees"]),
            max_depth=int(d["max_depth"]),
            learning_rate=float(d["learning_rate"]),
            reg_lambda=float(d["reg_lambda"]),
            min_split_gain=float(d["min_split_gain"]),
            min_child_weight=float(d["min_child_weight"]),
            subsample=float(d["subsample"]),
            seed=int(d["seed"]),
        )


@dataclass
class TreeNode:
    """Binary regression tree node. Internal nodes test `feature < threshold`,
    routing masked rows to the default branch."""

    feature: int = -1
    threshold: float = 0.0
    default_left: bool = True
    gain: float = 0.0
    value: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict[str, Any]:
        if self.is_leaf:
            return {"v": self.value}
        return {
            "f": self.feature,
            "t": self.threshold,
            "d": 1 if self.default_left else 0,
            "g": self.gain,
            "l": self.left.to_dict(),
            "r": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TreeNode":
        if "v" in d:
            return cls(value=float(d["v"]))
        return cls(
            feature=int(d["f"]),
            threshold=float(d["t"]),
            default_left=bool(d["d"]),
            gain=float(d["g"]),
            left=cls.from_dict(d["l"]),
            right=cls.from_dict(d["r"]),
        )

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())


def _tree_margin(node: TreeNode, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape[0], dtype=np.float64)
    stack: list[tuple[TreeNode, np.ndarray]] = [(node, np.arange(x.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if idx.size == 0:
            continue
        if nd.is_leaf:
            out[idx] = nd.value
            continue
        col = x[idx, nd.feature]
        msk = mask[idx, nd.feature]
        go_left = np.where(msk, nd.default_left, col < nd.threshold)
        stack.append((nd.left, idx[go_left]))
        stack.append((nd.right, idx[~go_left]))
    return out


class _FlatEnsemble:
    """All trees of an ensemble packed into one set of flat node tables so a
    batch can be routed through every tree at once with numpy gathers instead
    of one Python-level traversal per tree. Nodes are numbered globally and
    children stored as absolute indices, so traversal state is a single flat
    integer vector of shape (rows * trees,)."""

    __slots__ = ("feature", "threshold", "default_left", "left", "right", "value", "roots", "depth", "n_trees")

    def __init__(self, trees: Sequence[TreeNode]) -> None:
        nodes: list[TreeNode] = []
        roots: list[int] = []
        for root in trees:
            roots.append(len(nodes))
            stack = [root]
            while stack:
                nd = stack.pop()
                nodes.append(nd)
                if not nd.is_leaf:
                    stack.append(nd.right)
                    stack.append(nd.left)
        total = len(nodes)
        index = {id(nd): i for i, nd in enumerate(nodes)}
        self.n_trees = len(trees)
        self.roots = np.asarray(roots, dtype=np.int64)
        self.feature = np.full(total, -1, dtype=np.int64)
        self.threshold = np.zeros(total, dtype=np.float64)
        self.default_left = np.zeros(total, dtype=bool)
        self.left = np.zeros(total, dtype=np.int64)
        self.right = np.zeros(total, dtype=np.int64)
        self.value = np.zeros(total, dtype=np.float64)
        for i, nd in enumerate(nodes):
            if nd.is_leaf:
                self.value[i] = nd.value
            else:
                self.feature[i] = nd.feature
                self.threshold[i] = nd.threshold
                self.default_left[i] = nd.default_left
                self.left[i] = index[id(nd.left)]
                self.right[i] = index[id(nd.right)]
        self.depth = max((root.depth() for root in trees), default=0)

    def leaf_sum(self, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Sum of leaf values reached in each tree, one total per row."""
        n = x.shape[0]
        t = self.n_trees
        if n == 0 or t == 0:
            return np.zeros(n, dtype=np.float64)
        m = x.shape[1]
        xf = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
        mf = np.ascontiguousarray(mask, dtype=bool).reshape(-1)
        row_off = np.repeat(np.arange(n, dtype=np.int64) * m, t)
        cur = np.tile(self.roots, n)
        for _ in range(self.depth):
            feat = self.feature[cur]
            internal = feat >= 0
            if not internal.any():
                break
            cell = row_off + np.where(internal, feat, 0)
            go_left = np.where(mf[cell], self.default_left[cur], xf[cell] < self.threshold[cur])
            nxt = np.where(go_left, self.left[cur], self.right[cur])
            cur = np.where(internal, nxt, cur)
        return self.value[cur].reshape(n, t).sum(axis=1)


def _best_split(
    x: np.ndarray, mask: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: TrainConfig
) -> tuple[int, float, bool, float] | None:
    """Exact greedy split over all features; returns (feature, threshold,
    default_left, gain) or None when no admissible split exists."""
    n, m = x.shape
    if n < 2:
        return None
    lam = cfg.reg_lambda
    g_tot = g.sum()
    h_tot = h.sum()
    parent = g_tot * g_tot / (h_tot + lam) if h_tot + lam > 0 else 0.0

    xs = np.where(mask, np.inf, x)
    order = np.argsort(xs, axis=0, kind="stable")
    sv = np.take_along_axis(xs, order, axis=0)
    cg = np.cumsum(g[order], axis=0)
    ch = np.cumsum(h[order], axis=0)
    g_masked = (g[:, None] * mask).sum(axis=0)
    h_masked = (h[:, None] * mask).sum(axis=0)
    n_known = n - mask.sum(axis=0)

    # Candidate boundary i splits sorted positions [0..i] | [i+1..]; both
    # sides must hold at least one known row and straddle distinct values.
    boundary = np.arange(n - 1)[:, None]
    valid = (sv[:-1, :] < sv[1:, :]) & (boundary + 1 < n_known[None, :])
    if not valid.any():
        return None

    gl = cg[:-1, :]
    hl = ch[:-1, :]

    best_gain = -np.inf
    best: tuple[int, float, bool, float] | None = None
    for masked_left in (True, False):
        gl_eff = gl + g_masked[None, :] if masked_left else gl
        hl_eff = hl + h_masked[None, :] if masked_left else hl
        gr_eff = g_tot - gl_eff
        hr_eff = h_tot - hl_eff
        with np.errstate(divide="ignore", invalid="ignore"):
            gains = 0.5 * (
                gl_eff * gl_eff / (hl_eff + lam)
                + gr_eff * gr_eff / (hr_eff + lam)
                - parent
            ) - cfg.min_split_gain
        ok = (
            valid
            & (hl_eff >= cfg.min_child_weight)
            & (hr_eff >= cfg.min_child_weight)
            & (hl_eff + lam > 0)
            & (hr_eff + lam > 0)
        )
        gains = np.where(ok, gains, -np.inf)
        col_best_pos = np.argmax(gains, axis=0)
        col_best = gains[col_best_pos, np.arange(m)]
        f = int(np.argmax(col_best))
        gain = float(col_best[f])
        # Strict > keeps the earlier option on ties: default-left wins over
        # default-right, and within a pass lower feature index, lower threshold.
        if gain > best_gain and np.isfinite(gain):
            pos = int(col_best_pos[f])
            thr = float((sv[pos, f] + sv[pos + 1, f]) / 2.0)
            best_gain = gain
            best = (f, thr, masked_left, gain)
    if best is None or best_gain <= 0.0:
        return None
    return best


def _build_tree(
    x: np.ndarray,
    mask: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    rows: np.ndarray,
    depth: int,
    cfg: TrainConfig,
) -> TreeNode:
    g_sum = float(g[rows].sum())
    h_sum = float(h[rows].sum())
    leaf = TreeNode(value=-g_sum / (h_sum + cfg.reg_lambda))
    if depth >= cfg.max_depth or rows.size < 2:
        return leaf
    found = _best_split(x[rows], mask[rows], g[rows], h[rows], cfg)
    if found is None:
        return leaf
    f, thr, default_left, gain = found
    col = x[rows, f]
    msk = mask[rows, f]
    go_left = np.where(msk, default_left, col < thr)
    left_rows = rows[go_left]
    right_rows = rows[~go_left]
    if left_rows.size == 0 or right_rows.size == 0:
        return leaf
    return TreeNode(
        feature=f,
        threshold=thr,
        default_left=default_left,
        gain=gain,
        left=_build_tree(x, mask, g, h, left_rows, depth + 1, cfg),
        right=_build_tree(x, mask, g, h, right_rows, depth + 1, cfg),
    )


class SchemaMismatchError(ValueError):
    """Model and feature vector were produced under different schemas."""


@dataclass
class GBTModel:
    """Trained boosted ensemble plus everything needed to reuse it safely:
    config, class prior, feature names, and the schema fingerprint."""

    config: TrainConfig
    base_score: float
    trees: list[TreeNode]
    feature_names: tuple[str, ...]
    schema_fingerprint: str
    n_train: int
    class_prior: float
    mode: str | None = None
    training_loss: tuple[float, ...] = field(default_factory=tuple)

    FORMAT_VERSION = 1

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _check_x(self, x: np.ndarray, mask: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.n_features:
            raise SchemaMismatchError(
                f"input has {x.shape[1]} features, model expects {self.n_features}"
            )
        if mask is None:
            mask = np.zeros_like(x, dtype=bool)
        else:
            mask = np.asarray(mask, dtype=bool)
            if single and mask.ndim == 1:
                mask = mask[None, :]
        return x, mask

    def _flat(self) -> _FlatEnsemble | None:
        """Packed node tables for batch prediction, rebuilt if the tree list
        changed length since the last call. Cached outside the dataclass
        fields so serialization and equality ignore it."""
        cached = self.__dict__.get("_flat_cache")
        if cached is not None and cached[0] == len(self.trees):
            return cached[1]
        flat = _FlatEnsemble(self.trees) if self.trees else None
        self.__dict__["_flat_cache"] = (len(self.trees), flat)
        return flat

    def margin(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        x, mask = self._check_x(x, mask)
        flat = self._flat()
        if flat is None:
            return np.full(x.shape[0], self.base_score, dtype=np.float64)
        return self.base_score + self.config.learning_rate * flat.leaf_sum(x, mask)

    def margin_reference(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        """Per-tree traversal of the same ensemble. Slower than margin();
        kept as an independent cross-check for the vectorized path."""
        x, mask = self._check_x(x, mask)
        out = np.full(x.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            out += self.config.learning_rate * _tree_margin(tree, x, mask)
        return out

    def predict_proba(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        return sigmoid(self.margin(x, mask))

    def feature_importance(self) -> np.ndarray:
        """Total split gain accumulated per feature across the ensemble."""
        imp = np.zeros(self.n_features, dtype=np.float64)
        stack = list(self.trees)
        while stack:
            nd = stack.pop()
            if nd is None or nd.is_leaf:
                continue
            imp[nd.feature] += nd.gain
            stack.append(nd.left)
            stack.append(nd.right)
        return imp

    def to_json(self) -> str:
        payload = {
            "format_version": self.FORMAT_VERSION,
            "kind": "gbt",
            "config": self.config.to_dict(),
            "base_score": self.base_score,
            "trees": [t.to_dict() for t in self.trees],
            "feature_names": list(self.feature_names),
            "schema_fingerprint": self.schema_fingerprint,
            "n_train": self.n_train,
            "class_prior": self.class_prior,
            "mode": self.mode,
            "training_loss": list(self.training_loss),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, payload: str) -> "GBTModel":
        d = json.loads(payload)
        if d.get("format_version") != cls.FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {d.get('format_version')!r}")
        if d.get("kind") != "gbt":
            raise ValueError(f"not a boosted-tree model payload: kind={d.get('kind')!r}")
        return cls(
            config=TrainConfig.from_dict(d["config"]),
            base_score=float(d["base_score"]),
            trees=[TreeNode.from_dict(t) for t in d["trees"]],
            feature_names=tuple(d["feature_names"]),
            schema_fingerprint=d["schema_fingerprint"],
            n_train=int(d["n_train"]),
            class_prior=float(d["class_prior"]),
            mode=d.get("mode"),
            training_loss=tuple(d.get("training_loss", ())),
        )


def fit_gbt(
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig | None = None,
    mask: np.ndarray | None = None,
    feature_names: Sequence[str] | None = None,
    schema_fingerprint: str = "",
    mode: str | None = None,
) -> GBTModel:
    """Fit the boosted ensemble.

    Requires binary labels with both classes present. The base score is the
    training-set log-odds prior; every subsequent tree fits the Newton
    statistics of the logistic loss at the current margins.
    """
    if config is None:
        config = TrainConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("x must be a 2-d matrix")
    n, m = x.shape
    if y.shape != (n,):
        raise ValueError("y length does not match x")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be binary 0/1")
    pbar = float(y.mean())
    if pbar <= 0.0 or pbar >= 1.0:
        raise ValueError("labels must contain both classes")
    if mask is None:
        mask = np.zeros_like(x, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ValueError("mask shape does not match x")
    if not 0.0 < config.subsample <= 1.0:
        raise ValueError("subsample must be in (0, 1]")

    rng = np.random.default_rng(config.seed)
    base = math.log(pbar / (1.0 - pbar))
    margins = np.full(n, base, dtype=np.float64)
    trees: list[TreeNode] = []
    losses: list[float] = []
    all_rows = np.arange(n)
    n_sub = max(1, int(round(config.subsample * n)))
    for _ in range(config.n_trees):
        p = sigmoid(margins)
        g = p - y
        h = p * (1.0 - p)
        if config.subsample < 1.0:
            rows = np.sort(rng.choice(n, size=n_sub, replace=False))
        else:
            rows = all_rows
        tree = _build_tree(x, mask, g, h, rows, 0, config)
        trees.append(tree)
        margins += config.learning_rate * _tree_margin(tree, x, mask)
        losses.append(log_loss(y, sigmoid(margins)))

    names = tuple(feature_names) if feature_names is not None else tuple(
        f"f{j}" for j in range(m)
    )
    return GBTModel(
        config=replace(config),
        base_score=base,
        trees=trees,
        feature_names=names,
        schema_fingerprint=schema_fingerprint,
        n_train=n,
        class_prior=pbar,
        mode=mode,
        training_loss=tuple(losses),
    )


def predict_event_proba(model: GBTModel, vector, schema) -> float:
    """Score one extracted FeatureVector, refusing schema mismatches."""
    if schema.fingerprint != model.schema_fingerprint:
        raise SchemaMismatchError(
            f"feature schema {schema.fingerprint} does not match model "
            f"schema {model.schema_fingerprint}"
        )
    p = model.predict_proba(vector.values, vector.mask)
    return float(p[0])
