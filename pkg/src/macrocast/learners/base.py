"""Shared types for the model zoo: datasets, losses, specs, fitted models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = ["Dataset", "LossKind", "ModelSpec", "TrainedModel", "TreeNode", "FAMILIES"]

FAMILIES = (
    "ar",
    "ols",
    "ridge",
    "lasso",
    "elasticnet",
    "kernel_ridge",
    "random_forest",
    "gbdt",
    "xgb_tree",
    "xgb_linear",
)

DEFAULT_HUBER_DELTA = 1.35


@dataclass(frozen=True)
class Dataset:
    """A finite, fully observed regression design."""

    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.targets, dtype=float)
        if X.ndim != 2 or y.ndim != 1:
            raise ValueError("features must be 2-D and targets 1-D")
        n, d = X.shape
        if n < 1 or d < 1:
            raise ValueError(f"empty dataset ({n} rows, {d} features)")
        if y.shape[0] != n:
            raise ValueError(f"{n} rows but {y.shape[0]} targets")
        if len(self.feature_names) != d:
            raise ValueError(f"{d} features but {len(self.feature_names)} names")
        if len(set(self.feature_names)) != d:
            raise ValueError("feature names must be unique")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("dataset contains missing or non-finite cells")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)
        X.setflags(write=False)
        y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.features[rows].copy(), self.targets[rows].copy(), self.feature_names)


@dataclass(frozen=True)
class LossKind:
    """Squared, absolute, or Huber loss."""

    variant: str  # "squared" | "absolute" | "huber"
    delta: float = DEFAULT_HUBER_DELTA

    def __post_init__(self) -> None:
        if self.variant not in ("squared", "absolute", "huber"):
            raise ValueError(f"unknown loss variant {self.variant!r}")
        if self.delta <= 0:
            raise ValueError(f"huber delta must be positive, got {self.delta}")

    @classmethod
    def squared(cls) -> "LossKind":
        return cls("squared")

    @classmethod
    def absolute(cls) -> "LossKind":
        return cls("absolute")

    @classmethod
    def huber(cls, delta: float = DEFAULT_HUBER_DELTA) -> "LossKind":
        return cls("huber", delta)

    def evaluate(self, y: np.ndarray, pred: np.ndarray) -> float:
        r = np.asarray(y) - np.asarray(pred)
        if self.variant == "squared":
            return float(np.mean(r**2))
        if self.variant == "absolute":
            return float(np.mean(np.abs(r)))
        a = np.abs(r)
        quad = 0.5 * r**2
        lin = self.delta * (a - 0.5 * self.delta)
        return float(np.mean(np.where(a <= self.delta, quad, lin)))


_HYPER_RANGES = {
    "lam": lambda v: v >= 0,
    "rho": lambda v: 0 <= v <= 1,
    "n_trees": lambda v: v >= 1,
    "learning_rate": lambda v: 0 < v <= 1,
    "max_depth": lambda v: v >= 1,
    "min_leaf": lambda v: v >= 1,
    "subsample": lambda v: 0 < v <= 1,
    "feature_fraction": lambda v: 0 < v <= 1,
    "gamma_complexity": lambda v: v >= 0,
    "lambda_leaf": lambda v: v >= 0,
    "degree": lambda v: v >= 1,
    "gamma": lambda v: v > 0,
    "folds": lambda v: v >= 2,
}


@dataclass(frozen=True)
class ModelSpec:
    """One model family with its hyperparameters and seed."""

    family: str
    loss: LossKind = field(default_factory=LossKind.squared)
    hyperparams: Mapping[str, float | int | str] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")
        for key, value in self.hyperparams.items():
            check = _HYPER_RANGES.get(key)
            if check is not None and not check(value):
                raise ValueError(f"hyperparameter {key}={value} out of range for {self.family}")
        object.__setattr__(self, "hyperparams", dict(self.hyperparams))

    def get(self, key: str, default=None):
        return self.hyperparams.get(key, default)

    def with_params(self, **updates) -> "ModelSpec":
        merged = {**self.hyperparams, **updates}
        return ModelSpec(self.family, self.loss, merged, self.seed)

    def to_json_dict(self) -> dict:
        return {
            "family": self.family,
            "loss": {"variant": self.loss.variant, "delta": self.loss.delta},
            "hyperparams": dict(sorted(self.hyperparams.items())),
            "seed": self.seed,
        }


@dataclass
class TreeNode:
    """Binary regression-tree node; ``feature < 0`` marks a leaf."""

    feature: int = -1
    threshold: float = 0.0
    value: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(X.shape[0])
        stack = [(self, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if idx.size == 0:
                continue
            if node.feature < 0:
                out[idx] = node.value
            else:
                go_left = X[idx, node.feature] <= node.threshold
                stack.append((node.left, idx[go_left]))
                stack.append((node.right, idx[~go_left]))
        return out

    def leaves(self) -> list["TreeNode"]:
        if self.feature < 0:
            return [self]
        return self.left.leaves() + self.right.leaves()

    def to_json_dict(self) -> dict:
        if self.feature < 0:
            return {"value": self.value}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_json_dict(),
            "right": self.right.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TreeNode":
        if "value" in d and "feature" not in d:
            return cls(value=float(d["value"]))
        return cls(
            feature=int(d["feature"]),
            threshold=float(d["threshold"]),
            left=cls.from_json_dict(d["left"]),
            right=cls.from_json_dict(d["right"]),
        )


class TrainedModel:
    """Base class for immutable fitted predictors."""

    def __init__(self, spec: ModelSpec, feature_names: tuple[str, ...], n: int):
        self.spec = spec
        self.feature_names = tuple(feature_names)
        self.n_train = n

    @property
    def d(self) -> int:
        return len(self.feature_names)

    def predict(self, X: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def _check_input(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"model expects {self.d} features, got {X.shape[1]}")
        return X
