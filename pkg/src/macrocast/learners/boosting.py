"""Forward-stagewise boosting.

``fit_gbdt`` is first-order gradient boosting: each stage fits an
SE-criterion tree to the pseudo-residuals (the negative loss gradient at
the current model) and adds it scaled by the learning rate. ``fit_xgb`` is
second-order boosting under the squared-error objective with the g = yhat - y,
h = 1 convention; leaf weights are -G/(H + lambda_leaf) and a split is kept
only when

    gain = 0.5*[G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam)] - gamma > 0.

The linear variant runs boosted cyclic coordinate updates with the same
g/h statistics: each round sweeps coordinates j in order, applying
beta_j += eta * (-(sum_i g_i x_ij + lambda_leaf*beta_j) / (sum_i x_ij^2 + lambda_leaf))
with g refreshed after every coordinate, then the unpenalized bias step
b += eta * (-mean(g)).
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..rng import derive_rng
from .base import Dataset, LossKind, ModelSpec, TrainedModel, TreeNode
from .tree import build_tree

__all__ = ["fit_gbdt", "fit_xgb", "BoostedTreesModel", "BoostedLinearModel", "pseudo_residuals"]


def pseudo_residuals(loss: LossKind, residual: np.ndarray) -> np.ndarray:
    """Negative gradient of the loss at the current model, as a function of
    residual = y - prediction."""
    if loss.variant == "squared":
        return residual
    if loss.variant == "absolute":
        return np.sign(residual)
    return np.clip(residual, -loss.delta, loss.delta)


class BoostedTreesModel(TrainedModel):
    def __init__(self, spec: ModelSpec, feature_names, n: int, base_score: float,
                 trees: list[TreeNode], learning_rate: float, train_losses: list[float]):
        super().__init__(spec, feature_names, n)
        self.base_score = float(base_score)
        self.trees = trees
        self.learning_rate = float(learning_rate)
        self.train_losses = list(train_losses)  # loss after 0..M stages

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = self._check_input(X)
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out

    def params_json(self) -> dict:
        return {
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "trees": [t.to_json_dict() for t in self.trees],
        }


class BoostedLinearModel(TrainedModel):
    def __init__(self, spec: ModelSpec, feature_names, n: int, coef: np.ndarray, intercept: float):
        super().__init__(spec, feature_names, n)
        self.coef = np.asarray(coef, dtype=float)
        self.coef.setflags(write=False)
        self.intercept = float(intercept)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self._check_input(X) @ self.coef + self.intercept

    def params_json(self) -> dict:
        return {"coef": self.coef.tolist(), "intercept": self.intercept}


def _stage_rows(n: int, subsample: float, seed: int, stage: int, label: str) -> np.ndarray:
    if subsample >= 1.0:
        return np.arange(n)
    k = max(1, int(round(subsample * n)))
    rng = derive_rng(seed, label, stage)
    return np.sort(rng.choice(n, size=k, replace=False))


def fit_gbdt(data: Dataset, loss: LossKind, spec: ModelSpec) -> BoostedTreesModel:
    """First-order gradient boosting with SE-criterion stage trees.

    Base score is the mean under squared loss, the median otherwise.
    Training loss is tracked per stage (nonincreasing under squared loss
    with subsample=1).
    """
    n_stages = int(spec.get("n_trees", 100))
    eta = float(spec.get("learning_rate", 0.1))
    max_depth = int(spec.get("max_depth", 2))
    min_leaf = int(spec.get("min_leaf", 1))
    subsample = float(spec.get("subsample", 1.0))
    if not 0 < eta <= 1:
        raise ValueError(f"learning rate must be in (0, 1], got {eta}")

    y = data.targets
    base = float(np.mean(y)) if loss.variant == "squared" else float(np.median(y))
    pred = np.full(data.n, base)
    trees: list[TreeNode] = []
    losses = [loss.evaluate(y, pred)]
    for m in range(n_stages):
        grad = pseudo_residuals(loss, y - pred)
        rows = _stage_rows(data.n, subsample, spec.seed, m, "gbdt_subsample")
        tree = build_tree(
            data.features[rows], grad[rows],
            criterion="se", max_depth=max_depth, min_leaf=min_leaf,
        )
        trees.append(tree)
        pred += eta * tree.predict(data.features)
        losses.append(loss.evaluate(y, pred))
    return BoostedTreesModel(spec, data.feature_names, data.n, base, trees, eta, losses)


def _xgb_leaf_weight(G: float, H: float, lambda_leaf: float) -> float:
    return -G / (H + lambda_leaf)


def _xgb_gain(GL: float, HL: float, GR: float, HR: float, lambda_leaf: float) -> float:
    full = (GL + GR) ** 2 / (HL + HR + lambda_leaf)
    return 0.5 * (GL**2 / (HL + lambda_leaf) + GR**2 / (HR + lambda_leaf) - full)


@njit(cache=True)
def _scan_xgb(Xc: np.ndarray, g: np.ndarray, h: np.ndarray, min_leaf: int, lambda_leaf: float):
    """Best second-order split over columns: (col, threshold, raw_gain).

    raw_gain excludes the gamma penalty; col is -1 when nothing is valid.
    Ties keep the earliest column, then the smallest threshold.
    """
    m, k = Xc.shape
    G = g.sum()
    H = h.sum()
    parent = G * G / (H + lambda_leaf)
    best_j = -1
    best_gain = -np.inf
    best_thr = 0.0
    for j in range(k):
        order = np.argsort(Xc[:, j])
        GL = 0.0
        HL = 0.0
        col_gain = -np.inf
        col_thr = 0.0
        for i in range(m - 1):
            GL += g[order[i]]
            HL += h[order[i]]
            if i + 1 < min_leaf or m - i - 1 < min_leaf:
                continue
            xa = Xc[order[i], j]
            xb = Xc[order[i + 1], j]
            if xa < xb:
                GR = G - GL
                HR = H - HL
                gain = 0.5 * (GL * GL / (HL + lambda_leaf) + GR * GR / (HR + lambda_leaf) - parent)
                if gain > col_gain:
                    col_gain = gain
                    col_thr = 0.5 * (xa + xb)
        if col_gain > -np.inf and col_gain > best_gain:
            best_gain = col_gain
            best_j = j
            best_thr = col_thr
    return best_j, best_thr, best_gain


def xgb_best_split(
    X: np.ndarray, g: np.ndarray, h: np.ndarray, min_leaf: int,
    lambda_leaf: float, gamma_complexity: float,
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, gain) with the gamma penalty applied, or
    None when no split has gain > 0."""
    if X.shape[0] < 2 * min_leaf:
        return None
    j, thr, raw = _scan_xgb(
        np.ascontiguousarray(X, dtype=float),
        np.ascontiguousarray(g, dtype=float),
        np.ascontiguousarray(h, dtype=float),
        min_leaf,
        lambda_leaf,
    )
    gain = raw - gamma_complexity
    if j < 0 or not gain > 0:
        return None
    return int(j), float(thr), float(gain)


def _build_xgb_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    max_depth: int,
    min_leaf: int,
    lambda_leaf: float,
    gamma_complexity: float,
) -> TreeNode:
    """Grow one second-order tree; splits must clear the gamma threshold."""

    def grow(rows: np.ndarray, depth: int) -> TreeNode:
        G, H = float(g[rows].sum()), float(h[rows].sum())
        node = TreeNode(value=_xgb_leaf_weight(G, H, lambda_leaf))
        if depth >= max_depth or rows.size < 2 * min_leaf:
            return node
        found = xgb_best_split(X[rows], g[rows], h[rows], min_leaf, lambda_leaf, gamma_complexity)
        if found is None:
            return node
        feature, threshold, _gain = found
        go_left = X[rows, feature] <= threshold
        node.feature = feature
        node.threshold = threshold
        node.left = grow(rows[go_left], depth + 1)
        node.right = grow(rows[~go_left], depth + 1)
        return node

    return grow(np.arange(X.shape[0]), 0)


def fit_xgb(data: Dataset, base: str, spec: ModelSpec) -> TrainedModel:
    """Second-order boosting, ``base`` in {"tree", "linear"}."""
    if base not in ("tree", "linear"):
        raise ValueError(f"xgb base must be 'tree' or 'linear', got {base!r}")
    n_rounds = int(spec.get("n_trees", 100))
    eta = float(spec.get("learning_rate", 0.1))
    lambda_leaf = float(spec.get("lambda_leaf", 1.0))
    gamma_complexity = float(spec.get("gamma_complexity", 0.0))
    if lambda_leaf < 0 or gamma_complexity < 0:
        raise ValueError("lambda_leaf and gamma_complexity must be >= 0")

    y = data.targets
    base_score = float(np.mean(y))

    if base == "tree":
        max_depth = int(spec.get("max_depth", 2))
        min_leaf = int(spec.get("min_leaf", 1))
        subsample = float(spec.get("subsample", 1.0))
        pred = np.full(data.n, base_score)
        trees: list[TreeNode] = []
        losses = [float(np.mean((y - pred) ** 2))]
        for m in range(n_rounds):
            rows = _stage_rows(data.n, subsample, spec.seed, m, "xgb_subsample")
            g = (pred - y)[rows]
            h = np.ones(rows.size)
            tree = _build_xgb_tree(
                data.features[rows], g, h, max_depth, min_leaf, lambda_leaf, gamma_complexity
            )
            trees.append(tree)
            pred += eta * tree.predict(data.features)
            losses.append(float(np.mean((y - pred) ** 2)))
        return BoostedTreesModel(spec, data.feature_names, data.n, base_score, trees, eta, losses)

    # Linear base: boosted cyclic coordinate-wise ridge steps, see module doc.
    X = data.features
    col_sq = (X**2).sum(axis=0)
    coef = np.zeros(data.d)
    intercept = base_score
    pred = np.full(data.n, intercept)
    for _ in range(n_rounds):
        for j in range(data.d):
            if col_sq[j] == 0:
                continue
            g = pred - y
            Gj = X[:, j] @ g + lambda_leaf * coef[j]
            delta = -Gj / (col_sq[j] + lambda_leaf)
            step = eta * delta
            coef[j] += step
            pred += step * X[:, j]
        g = pred - y
        step = eta * (-np.mean(g))
        intercept += step
        pred += step
    return BoostedLinearModel(spec, data.feature_names, data.n, coef, intercept)
