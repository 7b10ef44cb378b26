"""The model zoo: from-scratch learners behind one ``fit(spec, data)`` door."""

from __future__ import annotations

from .base import Dataset, LossKind, ModelSpec, TrainedModel, TreeNode
from .boosting import BoostedLinearModel, BoostedTreesModel, fit_gbdt, fit_xgb
from .forest import ForestModel, fit_random_forest
from .kernel import KernelRidgeModel, KernelSpec, fit_kernel_ridge, gram_matrix
from .linear import LinearModel, fit_elasticnet, fit_lasso, fit_ols, fit_ridge
from .selection import CVResult, cross_validate
from .serialize import deserialize_model, model_hash, serialize_model
from .tree import TreeModel, best_split, build_tree, fit_tree

__all__ = [
    "Dataset",
    "LossKind",
    "ModelSpec",
    "TrainedModel",
    "TreeNode",
    "fit",
    "fit_ols",
    "fit_ridge",
    "fit_lasso",
    "fit_elasticnet",
    "fit_kernel_ridge",
    "fit_tree",
    "fit_random_forest",
    "fit_gbdt",
    "fit_xgb",
    "cross_validate",
    "CVResult",
    "KernelSpec",
    "gram_matrix",
    "best_split",
    "build_tree",
    "serialize_model",
    "deserialize_model",
    "model_hash",
    "LinearModel",
    "TreeModel",
    "ForestModel",
    "KernelRidgeModel",
    "BoostedTreesModel",
    "BoostedLinearModel",
]


def fit(spec: ModelSpec, data: Dataset) -> TrainedModel:
    """Fit any family from its spec."""
    family = spec.family
    if family in ("ar", "ols"):
        return fit_ols(data, family=family)
    if family == "ridge":
        return fit_ridge(data, spec.get("lam", 1.0))
    if family == "lasso":
        return fit_lasso(data, spec.get("lam", 1.0))
    if family == "elasticnet":
        return fit_elasticnet(data, spec.get("lam", 1.0), spec.get("rho", 0.5))
    if family == "kernel_ridge":
        gamma = spec.get("gamma")
        if gamma is None:
            # sklearn-style "scale": unit kernel width on the data's own scale
            mean_var = float(data.features.var(axis=0).mean())
            gamma = spec.get("gamma_scale", 1.0) / (data.d * max(mean_var, 1e-12))
        kernel = KernelSpec(
            kind=spec.get("kernel", "rbf"),
            degree=int(spec.get("degree", 2)),
            coef0=spec.get("coef0", 1.0),
            gamma=float(gamma),
        )
        return fit_kernel_ridge(data, spec.get("lam", 1.0), kernel)
    if family == "random_forest":
        return fit_random_forest(data, spec)
    if family == "gbdt":
        return fit_gbdt(data, spec.loss, spec)
    if family == "xgb_tree":
        return fit_xgb(data, "tree", spec)
    if family == "xgb_linear":
        return fit_xgb(data, "linear", spec)
    raise ValueError(f"unknown model family {family!r}")
