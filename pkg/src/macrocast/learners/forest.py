"""Random forests: seeded bootstrap resamples + per-split feature subsets.

Per-split subsets are drawn from the feature names in sorted order, with a
stream keyed by (seed, tree, node). Predictions are therefore invariant to
reordering the feature columns of the training matrix.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import derive_rng
from .base import Dataset, ModelSpec, TrainedModel, TreeNode
from .tree import build_tree, criterion_name

__all__ = ["fit_random_forest", "ForestModel"]


class ForestModel(TrainedModel):
    def __init__(self, spec: ModelSpec, feature_names, n: int, trees: list[TreeNode]):
        super().__init__(spec, feature_names, n)
        self.trees = trees

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = self._check_input(X)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        X = self._check_input(X)
        return np.stack([tree.predict(X) for tree in self.trees])

    def params_json(self) -> dict:
        return {"trees": [t.to_json_dict() for t in self.trees]}


def fit_random_forest(data: Dataset, spec: ModelSpec) -> ForestModel:
    """Fit a forest of CART trees per ``spec`` (criterion from spec.loss)."""
    if data.n < 4:
        raise ValueError(f"random forest needs at least 4 rows, got {data.n}")
    n_trees = int(spec.get("n_trees", 100))
    max_depth = int(spec.get("max_depth", 3))
    min_leaf = int(spec.get("min_leaf", 1))
    feature_fraction = float(spec.get("feature_fraction", 1.0))
    bootstrap = bool(spec.get("bootstrap", 1))
    crit = criterion_name(spec.loss)

    # Sorted-name order is the canonical feature universe for subsetting and
    # tie-breaks, so column permutations cannot change the fit.
    name_order = sorted(range(data.d), key=lambda j: data.feature_names[j])
    n_sub = max(1, math.ceil(feature_fraction * data.d))

    trees: list[TreeNode] = []
    for t in range(n_trees):
        if bootstrap:
            rows = derive_rng(spec.seed, "rf_bootstrap", t).integers(0, data.n, size=data.n)
            rows = np.sort(rows)
        else:
            rows = np.arange(data.n)
        X, y = data.features[rows], data.targets[rows]

        if n_sub >= data.d:
            candidate_fn = None  # all features, natural order: exact fit_tree reduction
        else:

            def candidate_fn(node_id: int, _t: int = t) -> list[int]:
                rng = derive_rng(spec.seed, "rf_featsub", _t, node_id)
                picks = rng.choice(data.d, size=n_sub, replace=False)
                return [name_order[p] for p in np.sort(picks)]

        trees.append(
            build_tree(
                X, y, criterion=crit, max_depth=max_depth, min_leaf=min_leaf, candidate_fn=candidate_fn
            )
        )
    return ForestModel(spec, data.feature_names, data.n, trees)
