"""CART regression trees with exact SE and AE split criteria.

Splits are axis-aligned thresholds at midpoints of consecutive distinct
sorted feature values. SE minimizes the summed within-child squared error
(leaf = mean); AE minimizes the summed absolute deviation from the child
median (leaf = median). Ties go to the earliest candidate feature, then the
smallest threshold. A node is split only if the criterion strictly
improves. The split scans are numba kernels: the backtest refits forests
at every origin, so this is the engine's hot path.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numba import njit

from .base import Dataset, LossKind, ModelSpec, TrainedModel, TreeNode

__all__ = ["fit_tree", "build_tree", "TreeModel", "best_split"]

_GAIN_EPS = 1e-12


@njit(cache=True)
def _ae_prefix_deviation(ys: np.ndarray, buf: np.ndarray, out: np.ndarray) -> None:
    """out[k] = sum |y - median| over ys[:k+1]; insertion-sorted buffer."""
    m = ys.shape[0]
    s_tot = 0.0
    for k in range(m):
        v = ys[k]
        i = k
        while i > 0 and buf[i - 1] > v:
            buf[i] = buf[i - 1]
            i -= 1
        buf[i] = v
        s_tot += v
        n = k + 1
        lo = (n - 1) // 2
        s_lo = 0.0
        for t in range(lo + 1):
            s_lo += buf[t]
        med = buf[lo] if n % 2 == 1 else 0.5 * (buf[lo] + buf[lo + 1])
        out[k] = (med * (lo + 1) - s_lo) + ((s_tot - s_lo) - med * (n - lo - 1))


@njit(cache=True)
def _scan_columns(Xc: np.ndarray, y: np.ndarray, min_leaf: int, use_ae: bool):
    """Best split over the columns of Xc; ties keep the earliest column,
    then the smallest threshold. Returns (col, threshold, child_loss);
    col is -1 when no valid split exists."""
    m, k = Xc.shape
    best_j = -1
    best_loss = np.inf
    best_thr = 0.0
    ys = np.empty(m)
    pre = np.empty(m)
    suf = np.empty(m)
    buf = np.empty(m)
    rev = np.empty(m)
    for j in range(k):
        order = np.argsort(Xc[:, j])
        for i in range(m):
            ys[i] = y[order[i]]
        if use_ae:
            _ae_prefix_deviation(ys, buf, pre)
            for i in range(m):
                rev[i] = ys[m - 1 - i]
            _ae_prefix_deviation(rev, buf, suf)
        else:
            # prefix/suffix SSE via running sums on mean-centered values
            mean = 0.0
            for i in range(m):
                mean += ys[i]
            mean /= m
            s1 = 0.0
            s2 = 0.0
            for i in range(m):
                c = ys[i] - mean
                s1 += c
                s2 += c * c
                pre[i] = s2 - s1 * s1 / (i + 1)
            s1 = 0.0
            s2 = 0.0
            for i in range(m):
                c = ys[m - 1 - i] - mean
                s1 += c
                s2 += c * c
                suf[i] = s2 - s1 * s1 / (i + 1)
        col_best = np.inf
        col_pos = -1
        for i in range(min_leaf - 1, m - min_leaf):
            xa = Xc[order[i], j]
            xb = Xc[order[i + 1], j]
            if xa < xb:
                loss = pre[i] + suf[m - 2 - i]
                if loss < col_best:
                    col_best = loss
                    col_pos = i
        if col_pos >= 0 and col_best < best_loss:
            best_loss = col_best
            best_j = j
            best_thr = 0.5 * (Xc[order[col_pos], j] + Xc[order[col_pos + 1], j])
    return best_j, best_thr, best_loss


def _node_loss(y: np.ndarray, criterion: str) -> float:
    if criterion == "se":
        return float(np.sum((y - y.mean()) ** 2))
    return float(np.sum(np.abs(y - np.median(y))))


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    candidates: Sequence[int],
    criterion: str,
    min_leaf: int,
) -> tuple[int, float, float] | None:
    """Best (feature, threshold, total_child_loss) or None if unsplittable.

    ``candidates`` fixes the tie-break priority: earlier wins on equal loss;
    within a feature the smallest threshold wins.
    """
    if criterion not in ("se", "ae"):
        raise ValueError(f"criterion must be 'se' or 'ae', got {criterion!r}")
    m = X.shape[0]
    if m < 2 * min_leaf:
        return None
    cand = np.asarray(candidates, dtype=np.intp)
    Xc = np.ascontiguousarray(X[:, cand], dtype=float)
    j, thr, loss = _scan_columns(Xc, np.ascontiguousarray(y, dtype=float), min_leaf, criterion == "ae")
    if j < 0:
        return None
    return int(cand[j]), float(thr), float(loss)


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    *,
    criterion: str,
    max_depth: int,
    min_leaf: int,
    candidate_fn: Callable[[int], Sequence[int]] | None = None,
) -> TreeNode:
    """Grow a tree greedily; ``candidate_fn(node_counter)`` supplies the
    ordered per-node candidate features (defaults to all, natural order)."""
    if criterion not in ("se", "ae"):
        raise ValueError(f"tree criterion must be 'se' or 'ae', got {criterion!r}")
    d = X.shape[1]
    all_features = list(range(d))
    leaf_of = (lambda v: float(np.mean(v))) if criterion == "se" else (lambda v: float(np.median(v)))
    counter = [0]

    def grow(rows: np.ndarray, depth: int) -> TreeNode:
        my_id = counter[0]
        counter[0] += 1
        yv = y[rows]
        node = TreeNode(value=leaf_of(yv))
        if depth >= max_depth or rows.size < 2 * min_leaf:
            return node
        cand = candidate_fn(my_id) if candidate_fn is not None else all_features
        found = best_split(X[rows], yv, cand, criterion, min_leaf)
        if found is None:
            return node
        feature, threshold, child_loss = found
        parent_loss = _node_loss(yv, criterion)
        if parent_loss - child_loss <= _GAIN_EPS * max(parent_loss, 1.0):
            return node
        go_left = X[rows, feature] <= threshold
        node.feature = feature
        node.threshold = threshold
        node.left = grow(rows[go_left], depth + 1)
        node.right = grow(rows[~go_left], depth + 1)
        return node

    return grow(np.arange(X.shape[0]), 0)


class TreeModel(TrainedModel):
    def __init__(self, spec: ModelSpec, feature_names, n: int, root: TreeNode):
        super().__init__(spec, feature_names, n)
        self.root = root

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.root.predict(self._check_input(X))

    def params_json(self) -> dict:
        return {"root": self.root.to_json_dict()}


_CRITERION_OF_LOSS = {"squared": "se", "absolute": "ae"}


def criterion_name(loss: LossKind) -> str:
    try:
        return _CRITERION_OF_LOSS[loss.variant]
    except KeyError:
        raise ValueError(f"trees support squared or absolute criteria, not {loss.variant!r}") from None


def fit_tree(
    data: Dataset,
    criterion: LossKind,
    max_depth: int = 3,
    min_leaf: int = 1,
) -> TreeModel:
    """Fit a single CART regression tree."""
    if data.n < 2 * min_leaf:
        raise ValueError(f"need at least 2*min_leaf={2 * min_leaf} rows, got {data.n}")
    crit = criterion_name(criterion)
    root = build_tree(
        data.features, data.targets, criterion=crit, max_depth=max_depth, min_leaf=min_leaf
    )
    spec = ModelSpec(
        "random_forest",
        loss=criterion,
        hyperparams={"n_trees": 1, "max_depth": max_depth, "min_leaf": min_leaf, "feature_fraction": 1.0},
    )
    return TreeModel(spec, data.feature_names, data.n, root)
