"""Classical regressors used as comparison points for the sequence models.

All of them consume one feature vector per example (the pipeline feeds them
each window's last row). The tree family is built from scratch: greedy
variance-reduction CART with midpoint thresholds, bagged into a forest with
per-split feature subsampling, and stacked into least-squares gradient
boosting (stage m fits a shallow tree to the current residuals and adds it
with shrinkage).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateDesignError, TooFewRowsError

RIDGE_FALLBACK = 1e-8


# --- linear regression ---------------------------------------------------

@dataclass(slots=True)
class LinearModel:
    coef: np.ndarray
    intercept: float


def linreg_fit(x: np.ndarray, y: np.ndarray) -> LinearModel:
    """Ordinary least squares via the normal equations.

    A singular Gram matrix (collinear or duplicated columns) falls back to
    ridge with lambda 1e-8 instead of failing.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, f = x.shape
    if n < f + 1:
        raise TooFewRowsError(f"need at least {f + 1} rows for {f} features, got {n}")
    if not x.any():
        raise DegenerateDesignError("design matrix is identically zero")
    design = np.column_stack([x, np.ones(n)])
    gram = design.T @ design
    rhs = design.T @ y
    try:
        np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        gram = gram + RIDGE_FALLBACK * np.eye(f + 1)
    beta = np.linalg.solve(gram, rhs)
    return LinearModel(coef=beta[:f], intercept=float(beta[f]))


def linreg_predict(model: LinearModel, x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) @ model.coef + model.intercept


# --- regression tree -----------------------------------------------------

@dataclass(slots=True)
class TreeNode:
    """Leaf when feature is None, else a binary split (x[feature] <= threshold)."""

    value: float
    n: int
    sse: float
    feature: int | None = None
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


def _node_stats(y: np.ndarray) -> tuple[float, float]:
    mean = float(y.mean())
    diff = y - mean
    return mean, float(diff @ diff)


def _best_split(
    x: np.ndarray,
    y: np.ndarray,
    sse_node: float,
    min_samples_leaf: float,
    feature_ids: np.ndarray,
) -> tuple[float, int, float] | None:
    """Highest-gain (feature, midpoint threshold); ties pick the lowest
    feature index, then the lowest threshold."""
    n = y.shape[0]
    best: tuple[float, int, float] | None = None
    min_count = int(math.ceil(min_samples_leaf))
    for j in feature_ids:
        col = x[:, j]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        ys = y[order]
        cuts = np.nonzero(xs[1:] > xs[:-1])[0]          # split after position i
        if cuts.size == 0:
            continue
        left_n = cuts + 1
        valid = (left_n >= min_count) & (n - left_n >= min_count)
        cuts = cuts[valid]
        if cuts.size == 0:
            continue
        s1 = np.cumsum(ys)
        s2 = np.cumsum(ys * ys)
        ln = cuts + 1.0
        rn = n - ln
        sse_left = s2[cuts] - (s1[cuts] ** 2) / ln
        sse_right = (s2[-1] - s2[cuts]) - ((s1[-1] - s1[cuts]) ** 2) / rn
        gains = sse_node - sse_left - sse_right
        pick = int(np.argmax(gains))                    # first max: lowest threshold
        gain = float(gains[pick])
        if gain <= 0.0:
            continue
        threshold = float((xs[cuts[pick]] + xs[cuts[pick] + 1]) / 2.0)
        if best is None or gain > best[0]:
            best = (gain, int(j), threshold)
    return best


def _grow(
    x: np.ndarray,
    y: np.ndarray,
    depth: int,
    max_depth: int,
    min_samples_leaf: float,
    rng: np.random.Generator | None,
    feature_fraction: float,
) -> TreeNode:
    mean, sse = _node_stats(y)
    node = TreeNode(value=mean, n=y.shape[0], sse=sse)
    if depth >= max_depth or y.shape[0] < 2 * min_samples_leaf or sse <= 0.0:
        return node
    n_features = x.shape[1]
    if rng is not None and feature_fraction < 1.0:
        size = max(1, int(round(feature_fraction * n_features)))
        feature_ids = np.sort(rng.choice(n_features, size=size, replace=False))
    else:
        feature_ids = np.arange(n_features)
    found = _best_split(x, y, sse, min_samples_leaf, feature_ids)
    if found is None:
        return node
    _, j, threshold = found
    mask = x[:, j] <= threshold
    node.feature = j
    node.threshold = threshold
    node.left = _grow(x[mask], y[mask], depth + 1, max_depth,
                      min_samples_leaf, rng, feature_fraction)
    node.right = _grow(x[~mask], y[~mask], depth + 1, max_depth,
                       min_samples_leaf, rng, feature_fraction)
    return node


def _internal_nodes(node: TreeNode, out: list[TreeNode]) -> None:
    if not node.is_leaf:
        out.append(node)
        _internal_nodes(node.left, out)
        _internal_nodes(node.right, out)


def _subtree_cost(node: TreeNode, n_total: int) -> tuple[float, int]:
    """(sum of leaf SSE / n_total, leaf count) under this node."""
    if node.is_leaf:
        return node.sse / n_total, 1
    lc, ln = _subtree_cost(node.left, n_total)
    rc, rn = _subtree_cost(node.right, n_total)
    return lc + rc, ln + rn


def _collapse(node: TreeNode) -> None:
    node.feature = None
    node.left = None
    node.right = None


def prune_tree(root: TreeNode, ccp_alpha: float, n_total: int) -> TreeNode:
    """Minimal cost-complexity pruning.

    Repeatedly collapses the weakest link: the internal node whose effective
    alpha g = (R(leaf) - R(subtree)) / (leaves - 1) is smallest, while
    g <= ccp_alpha. R is SSE normalized by the training-set size.
    """
    if ccp_alpha < 0:
        raise ConfigError(f"ccp_alpha must be >= 0, got {ccp_alpha}")
    if ccp_alpha == 0.0:
        return root
    while not root.is_leaf:
        weakest: list[TreeNode] = []
        weakest_g = math.inf
        internals: list[TreeNode] = []
        _internal_nodes(root, internals)
        for node in internals:
            r_subtree, leaves = _subtree_cost(node, n_total)
            g = (node.sse / n_total - r_subtree) / (leaves - 1)
            if g < weakest_g:
                weakest_g = g
                weakest = [node]
            elif g == weakest_g:
                weakest.append(node)
        if weakest_g > ccp_alpha:
            break
        for node in weakest:
            _collapse(node)
    return root


def tree_fit(
    x: np.ndarray,
    y: np.ndarray,
    max_depth: int,
    min_samples_leaf: float = 1,
    ccp_alpha: float = 0.0,
    *,
    rng: np.random.Generator | None = None,
    feature_fraction: float = 1.0,
) -> TreeNode:
    """Greedy CART regression tree.

    Split candidates are midpoints between consecutive distinct sorted
    values; the chosen split maximizes the decrease in sum of squared error.
    `rng` and `feature_fraction` enable per-split feature subsampling for
    ensembles.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if max_depth < 0:
        raise ConfigError(f"max_depth must be >= 0, got {max_depth}")
    if min_samples_leaf < 1:
        raise ConfigError(f"min_samples_leaf must be >= 1, got {min_samples_leaf}")
    if y.shape[0] < 1:
        raise TooFewRowsError("no rows to fit")
    root = _grow(x, y, 0, max_depth, min_samples_leaf, rng, feature_fraction)
    return prune_tree(root, ccp_alpha, y.shape[0])


def tree_predict(node: TreeNode, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape[0])
    _route(node, x, np.arange(x.shape[0]), out)
    return out


def _route(node: TreeNode, x: np.ndarray, rows: np.ndarray, out: np.ndarray) -> None:
    if node.is_leaf:
        out[rows] = node.value
        return
    mask = x[rows, node.feature] <= node.threshold
    _route(node.left, x, rows[mask], out)
    _route(node.right, x, rows[~mask], out)


# --- random forest -------------------------------------------------------

@dataclass(slots=True)
class ForestConfig:
    n_estimators: int = 300
    max_depth: int = 6
    min_samples_leaf: int = 4
    ccp_alpha: float = 0.0
    feature_fraction: float = 1.0 / 3.0
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        if not (0.0 < self.feature_fraction <= 1.0):
            raise ConfigError("feature_fraction must be in (0, 1]")


def forest_fit(
    x: np.ndarray,
    y: np.ndarray,
    cfg: ForestConfig,
    *,
    bootstrap: bool = True,
) -> list[TreeNode]:
    """Bagged trees; tree i draws its bootstrap and split subsamples from a
    generator seeded by (cfg.seed, i). Disabling bootstrap is a test hook."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    trees = []
    for i in range(cfg.n_estimators):
        rng = np.random.default_rng([cfg.seed, i])
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(
            tree_fit(
                x[rows],
                y[rows],
                cfg.max_depth,
                cfg.min_samples_leaf,
                cfg.ccp_alpha,
                rng=rng,
                feature_fraction=cfg.feature_fraction,
            )
        )
    return trees


def forest_predict(trees: Sequence[TreeNode], x: np.ndarray) -> np.ndarray:
    return np.mean([tree_predict(t, x) for t in trees], axis=0)


# --- gradient boosting ---------------------------------------------------

@dataclass(slots=True)
class BoostConfig:
    learning_rate: float = 0.1
    n_estimators: int = 70
    max_depth: int = 3
    min_child_weight: float = 200.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.learning_rate <= 1.0):
            raise ConfigError("learning_rate must be in (0, 1]")
        if self.n_estimators < 0:
            raise ConfigError("n_estimators must be >= 0")
        if self.min_child_weight < 1:
            raise ConfigError("min_child_weight must be >= 1")


@dataclass(slots=True)
class BoostModel:
    base: float
    learning_rate: float
    trees: list[TreeNode] = field(default_factory=list)


def boost_fit(x: np.ndarray, y: np.ndarray, cfg: BoostConfig) -> BoostModel:
    """Least-squares gradient boosting.

    F_0 is the target mean; each stage fits a depth-limited tree to the
    residuals y - F and adds learning_rate times its prediction, which makes
    the training MSE nonincreasing stage over stage. min_child_weight acts
    as the minimum row count per leaf.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] < 1:
        raise TooFewRowsError("no rows to fit")
    model = BoostModel(base=float(y.mean()), learning_rate=cfg.learning_rate)
    current = np.full(y.shape[0], model.base)
    for _ in range(cfg.n_estimators):
        residual = y - current
        tree = tree_fit(x, residual, cfg.max_depth, cfg.min_child_weight)
        current = current + cfg.learning_rate * tree_predict(tree, x)
        model.trees.append(tree)
    return model


def boost_predict(model: BoostModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.full(x.shape[0], model.base)
    for tree in model.trees:
        out += model.learning_rate * tree_predict(tree, x)
    return out


def boost_staged_predict(model: BoostModel, x: np.ndarray):
    """Yield predictions after stage 0 (the constant), 1, 2, ... n."""
    x = np.asarray(x, dtype=np.float64)
    out = np.full(x.shape[0], model.base)
    yield out.copy()
    for tree in model.trees:
        out += model.learning_rate * tree_predict(tree, x)
        yield out.copy()
