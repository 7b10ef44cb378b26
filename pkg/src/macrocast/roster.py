"""The model roster: canonical names for the single models, mixed models,
and weighted models, with this engine's default hyperparameters.

Single models:
  G1  AR, FM-AR-SE
  G2  XGB-GBTREE, XGB-GBLINEAR, GBDT-AE, GBDT-HUBER, GBDT-SE, RF-AE, RF-SE
  G3  FM-XGB-GBLINEAR, FM-XGB-GBTREE, FM-GBDT-{AE,HUBER,SE}, FM-RF-{AE,SE},
      FM-KRR-{POLY,RBF}, FM-LASSO
Mixed:    MEAN_G2, MEDIAN_G2, MEAN_G3, MEDIAN_G3, MEAN_G2G3, MEDIAN_G2G3
Weighted: RECIP{m} and EXP{beta}_{m} for beta in {0.5, 0.8, 0.9, 1},
          m in {4, 6, 8}, weighting the G2 & G3 members.

All hyperparameter defaults here are engine choices, overridable per model
from the run config.
"""

from __future__ import annotations

import re

from .ensemble import EnsembleSpec
from .learners import LossKind, ModelSpec
from .pipeline import BacktestModel, FeatureSpec
from .rng import stable_int

__all__ = [
    "G1_IDS",
    "G2_IDS",
    "G3_IDS",
    "SINGLE_IDS",
    "MIXED_IDS",
    "WEIGHTED_IDS",
    "ALL_IDS",
    "build_single",
    "build_ensemble",
    "is_single_id",
    "is_ensemble_id",
]

G1_IDS = ("AR", "FM-AR-SE")
G2_IDS = ("XGB-GBTREE", "XGB-GBLINEAR", "GBDT-AE", "GBDT-HUBER", "GBDT-SE", "RF-AE", "RF-SE")
G3_IDS = (
    "FM-XGB-GBLINEAR",
    "FM-XGB-GBTREE",
    "FM-GBDT-AE",
    "FM-GBDT-HUBER",
    "FM-GBDT-SE",
    "FM-RF-AE",
    "FM-RF-SE",
    "FM-KRR-POLY",
    "FM-KRR-RBF",
    "FM-LASSO",
)
SINGLE_IDS = G1_IDS + G2_IDS + G3_IDS

MIXED_IDS = ("MEAN_G2", "MEDIAN_G2", "MEAN_G3", "MEDIAN_G3", "MEAN_G2G3", "MEDIAN_G2G3")
_WEIGHT_WINDOWS = (4, 6, 8)
_WEIGHT_BETAS = ("0.5", "0.8", "0.9", "1")
WEIGHTED_IDS = tuple(f"RECIP{m}" for m in _WEIGHT_WINDOWS) + tuple(
    f"EXP{b}_{m}" for b in _WEIGHT_BETAS for m in _WEIGHT_WINDOWS
)
ALL_IDS = SINGLE_IDS + MIXED_IDS + WEIGHTED_IDS

_RECIP_RE = re.compile(r"^RECIP(\d+)$")
_EXP_RE = re.compile(r"^EXP(\d+(?:\.\d+)?)_(\d+)$")

_LOSS_SUFFIX = {"SE": LossKind.squared, "AE": LossKind.absolute, "HUBER": LossKind.huber}

_FOREST_DEFAULTS = {
    "n_trees": 100,
    "max_depth": 3,
    "min_leaf": 2,
    "feature_fraction": 1 / 3,
    "bootstrap": 1,
}
_GBDT_DEFAULTS = {"n_trees": 100, "learning_rate": 0.1, "max_depth": 2, "min_leaf": 2}
_XGB_TREE_DEFAULTS = {
    "n_trees": 100,
    "learning_rate": 0.1,
    "max_depth": 2,
    "min_leaf": 2,
    "lambda_leaf": 1.0,
    "gamma_complexity": 0.0,
}
_XGB_LINEAR_DEFAULTS = {"n_trees": 50, "learning_rate": 0.5, "lambda_leaf": 1.0}


def _family_and_defaults(model_id: str) -> tuple[str, LossKind, dict]:
    base = model_id[3:] if model_id.startswith("FM-") else model_id
    if base == "AR" or base == "AR-SE":
        return "ar", LossKind.squared(), {}
    if base.startswith("RF-"):
        return "random_forest", _LOSS_SUFFIX[base[3:]](), dict(_FOREST_DEFAULTS)
    if base.startswith("GBDT-"):
        return "gbdt", _LOSS_SUFFIX[base[5:]](), dict(_GBDT_DEFAULTS)
    if base == "XGB-GBTREE":
        return "xgb_tree", LossKind.squared(), dict(_XGB_TREE_DEFAULTS)
    if base == "XGB-GBLINEAR":
        return "xgb_linear", LossKind.squared(), dict(_XGB_LINEAR_DEFAULTS)
    if base == "KRR-POLY":
        return "kernel_ridge", LossKind.squared(), {"kernel": "poly", "lam": 1.0, "degree": 2, "coef0": 1.0}
    if base == "KRR-RBF":
        return "kernel_ridge", LossKind.squared(), {"kernel": "rbf", "lam": 1.0, "gamma_scale": 1.0}
    if base == "LASSO":
        return "lasso", LossKind.squared(), {"lam": 0.1}
    raise KeyError(f"unknown single model {model_id!r}")


def is_single_id(model_id: str) -> bool:
    return model_id in SINGLE_IDS


def is_ensemble_id(model_id: str) -> bool:
    return (
        model_id in MIXED_IDS
        or _RECIP_RE.match(model_id) is not None
        or _EXP_RE.match(model_id) is not None
    )


def build_single(
    model_id: str,
    seed: int,
    horizon: int = 1,
    overrides: dict | None = None,
) -> BacktestModel:
    """Roster entry for one Table-style single model name."""
    if not is_single_id(model_id):
        raise KeyError(f"unknown single model {model_id!r}")
    family, loss, hyper = _family_and_defaults(model_id)
    if overrides:
        hyper.update(overrides)
    if model_id == "AR":
        features = FeatureSpec(p_y=4, p_x=0, p_f=0, horizon=horizon, mode="target_only")
    elif model_id.startswith("FM-"):
        features = FeatureSpec(p_y=4, p_x=1, p_f=1, horizon=horizon, mode="factor_augmented")
    else:
        features = FeatureSpec(p_y=4, p_x=1, p_f=1, horizon=horizon, mode="raw_indicators")
    spec = ModelSpec(family, loss, hyper, seed=stable_int(f"{seed}:{model_id}"))
    return BacktestModel(model_id=model_id, spec=spec, features=features)


def _mixed_members(model_id: str) -> tuple[str, ...]:
    group = model_id.split("_", 1)[1]
    return {"G2": G2_IDS, "G3": G3_IDS, "G2G3": G2_IDS + G3_IDS}[group]


def build_ensemble(model_id: str, loss_for_weights: LossKind | None = None) -> EnsembleSpec:
    """Ensemble spec for a mixed or weighted roster name."""
    if model_id in MIXED_IDS:
        kind = "mean" if model_id.startswith("MEAN") else "median"
        return EnsembleSpec(model_id, _mixed_members(model_id), kind)
    m = _RECIP_RE.match(model_id)
    if m:
        return EnsembleSpec(
            model_id, G2_IDS + G3_IDS, "weighted_reciprocal",
            m=int(m.group(1)), loss_for_weights=loss_for_weights,
        )
    m = _EXP_RE.match(model_id)
    if m:
        return EnsembleSpec(
            model_id, G2_IDS + G3_IDS, "weighted_exponential",
            m=int(m.group(2)), beta=float(m.group(1)), loss_for_weights=loss_for_weights,
        )
    raise KeyError(f"unknown ensemble model {model_id!r}")
