"""Versioned JSON form of fitted models, plus the manifest hash."""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .base import ModelSpec, LossKind, TrainedModel, TreeNode
from .boosting import BoostedLinearModel, BoostedTreesModel
from .forest import ForestModel
from .kernel import KernelRidgeModel, KernelSpec
from .linear import LinearModel
from .tree import TreeModel

__all__ = ["serialize_model", "deserialize_model", "model_hash"]

FORMAT_VERSION = 1

_KIND_OF_CLASS = {
    LinearModel: "linear",
    TreeModel: "tree",
    ForestModel: "forest",
    KernelRidgeModel: "kernel_ridge",
    BoostedTreesModel: "boosted_trees",
    BoostedLinearModel: "boosted_linear",
}


def serialize_model(model: TrainedModel) -> dict:
    kind = _KIND_OF_CLASS.get(type(model))
    if kind is None:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {
        "version": FORMAT_VERSION,
        "kind": kind,
        "spec": model.spec.to_json_dict(),
        "feature_names": list(model.feature_names),
        "n_train": model.n_train,
        "params": model.params_json(),
    }


def _spec_from_json(d: dict) -> ModelSpec:
    loss = LossKind(d["loss"]["variant"], d["loss"]["delta"])
    return ModelSpec(d["family"], loss, d["hyperparams"], d["seed"])


def deserialize_model(doc: dict) -> TrainedModel:
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('version')!r}")
    kind = doc["kind"]
    spec = _spec_from_json(doc["spec"])
    names = tuple(doc["feature_names"])
    n = int(doc["n_train"])
    p = doc["params"]
    if kind == "linear":
        return LinearModel(spec, names, n, np.array(p["coef"], dtype=float), p["intercept"])
    if kind == "tree":
        return TreeModel(spec, names, n, TreeNode.from_json_dict(p["root"]))
    if kind == "forest":
        trees = [TreeNode.from_json_dict(t) for t in p["trees"]]
        return ForestModel(spec, names, n, trees)
    if kind == "kernel_ridge":
        kernel = KernelSpec(**p["kernel"])
        return KernelRidgeModel(
            spec, names, n, kernel,
            np.array(p["X_train"], dtype=float), np.array(p["dual_coef"], dtype=float),
        )
    if kind == "boosted_trees":
        trees = [TreeNode.from_json_dict(t) for t in p["trees"]]
        return BoostedTreesModel(spec, names, n, p["base_score"], trees, p["learning_rate"], [])
    if kind == "boosted_linear":
        return BoostedLinearModel(spec, names, n, np.array(p["coef"], dtype=float), p["intercept"])
    raise ValueError(f"unknown serialized model kind {kind!r}")


def model_hash(model: TrainedModel) -> str:
    """sha256 of the canonical serialized form, for run manifests."""
    doc = json.dumps(serialize_model(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()
