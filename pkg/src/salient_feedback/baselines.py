"""Reference classifiers the boosted model is compared against:
L2 logistic regression, a single CART, and a bagged random forest.

All of them consume the imputed feature values directly (no mask routing)
and expose predict_proba over row matrices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .gbt import TrainConfig, sigmoid

PROBA_EPS = 1e-9

BASELINE_KINDS = ("logreg", "decision_tree", "random_forest")


@dataclass
class LogregModel:
    weights: np.ndarray
    intercept: float

    def predict_proba(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        z = x @ self.weights + self.intercept
        return np.clip(sigmoid(z), PROBA_EPS, 1.0 - PROBA_EPS)

    def to_json(self) -> str:
        return json.dumps(
            {"kind": "logreg", "weights": self.weights.tolist(), "intercept": self.intercept},
            sort_keys=True,
        )


def _fit_logreg(x: np.ndarray, y: np.ndarray, l2: float, max_iter: int = 100) -> LogregModel:
    """Newton iterations on L2-penalized logistic loss; intercept unpenalized."""
    n, m = x.shape
    xb = np.hstack([x, np.ones((n, 1))])
    w = np.zeros(m + 1)
    ridge = np.diag([l2] * m + [0.0])
    for _ in range(max_iter):
        z = xb @ w
        p = sigmoid(z)
        grad = xb.T @ (p - y) + ridge @ w
        s = np.clip(p * (1.0 - p), 1e-12, None)
        hess = (xb * s[:, None]).T @ xb + ridge + 1e-10 * np.eye(m + 1)
        step = np.linalg.solve(hess, grad)
        w = w - step
        if float(np.max(np.abs(step))) < 1e-10:
            break
    return LogregModel(weights=w[:m], intercept=float(w[m]))


@dataclass
class CartNode:
    feature: int = -1
    threshold: float = 0.0
    proba: float = 0.0
    left: "CartNode | None" = None
    right: "CartNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _gini_split(
    x: np.ndarray, y: np.ndarray, feature_pool: np.ndarray, min_leaf: int
) -> tuple[int, float] | None:
    """Best (feature, threshold) by weighted Gini impurity, or None."""
    n = y.shape[0]
    best_score = np.inf
    best: tuple[int, float] | None = None
    for f in feature_pool:
        col = x[:, f]
        order = np.argsort(col, kind="stable")
        sv = col[order]
        sy = y[order]
        c1 = np.cumsum(sy)[:-1]
        nl = np.arange(1, n)
        nr = n - nl
        c1r = c1[-1] + sy[-1] - c1
        valid = (sv[:-1] < sv[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        p1l = c1 / nl
        p1r = c1r / nr
        gini = nl * 2.0 * p1l * (1.0 - p1l) + nr * 2.0 * p1r * (1.0 - p1r)
        gini = np.where(valid, gini, np.inf)
        pos = int(np.argmin(gini))
        score = float(gini[pos])
        if score < best_score - 1e-12:
            best_score = score
            best = (int(f), float((sv[pos] + sv[pos + 1]) / 2.0))
    return best


def _build_cart(
    x: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    depth: int,
    max_depth: int,
    min_leaf: int,
    n_features_per_split: int | None,
    rng: np.random.Generator | None,
) -> CartNode:
    ys = y[rows]
    node = CartNode(proba=float(ys.mean()))
    if depth >= max_depth or rows.size < 2 * min_leaf or ys.min() == ys.max():
        return node
    m = x.shape[1]
    if n_features_per_split is not None and n_features_per_split < m:
        pool = np.sort(rng.choice(m, size=n_features_per_split, replace=False))
    else:
        pool = np.arange(m)
    found = _gini_split(x[rows], ys, pool, min_leaf)
    if found is None:
        return node
    f, thr = found
    go_left = x[rows, f] < thr
    node.feature = f
    node.threshold = thr
    node.left = _build_cart(
        x, y, rows[go_left], depth + 1, max_depth, min_leaf, n_features_per_split, rng
    )
    node.right = _build_cart(
        x, y, rows[~go_left], depth + 1, max_depth, min_leaf, n_features_per_split, rng
    )
    return node


def _cart_proba(node: CartNode, x: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape[0], dtype=np.float64)
    stack = [(node, np.arange(x.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if idx.size == 0:
            continue
        if nd.is_leaf:
            out[idx] = nd.proba
            continue
        go_left = x[idx, nd.feature] < nd.threshold
        stack.append((nd.left, idx[go_left]))
        stack.append((nd.right, idx[~go_left]))
    return out


@dataclass
class CartModel:
    root: CartNode

    def predict_proba(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.clip(_cart_proba(self.root, x), PROBA_EPS, 1.0 - PROBA_EPS)


@dataclass
class ForestModel:
    roots: list[CartNode]

    def predict_proba(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        acc = np.zeros(x.shape[0], dtype=np.float64)
        for root in self.roots:
            acc += _cart_proba(root, x)
        return np.clip(acc / len(self.roots), PROBA_EPS, 1.0 - PROBA_EPS)


def fit_baseline(
    kind: str,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig | None = None,
    bootstrap: bool = True,
    n_features_per_split: int | str | None = "sqrt",
):
    """Fit one of the reference classifiers.

    kind: "logreg" | "decision_tree" | "random_forest".
    TrainConfig fields are reused where they make sense: reg_lambda as the
    logreg L2 strength, max_depth and min_child_weight (as a row count) for
    trees, n_trees and seed for the forest. A forest with one tree, no
    bootstrap, and the full feature pool reproduces the single CART exactly.
    """
    if config is None:
        config = TrainConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("x must be 2-d with matching y")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be binary 0/1")
    min_leaf = max(1, int(config.min_child_weight))
    if kind == "logreg":
        return _fit_logreg(x, y, l2=config.reg_lambda)
    if kind == "decision_tree":
        root = _build_cart(
            x, y, np.arange(x.shape[0]), 0, config.max_depth, min_leaf, None, None
        )
        return CartModel(root=root)
    if kind == "random_forest":
        if n_features_per_split == "sqrt":
            pool_size: int | None = max(1, int(np.sqrt(x.shape[1])))
        else:
            pool_size = n_features_per_split
        rng = np.random.default_rng(config.seed)
        n = x.shape[0]
        roots = []
        for _ in range(config.n_trees):
            rows = np.sort(rng.choice(n, size=n, replace=True)) if bootstrap else np.arange(n)
            roots.append(
                _build_cart(x, y, rows, 0, config.max_depth, min_leaf, pool_size, rng)
            )
        return ForestModel(roots=roots)
    raise ValueError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
