"""Kernel ridge regression via the dual solve alpha = (K + lam*I)^-1 y."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Dataset, ModelSpec, TrainedModel

__all__ = ["KernelSpec", "fit_kernel_ridge", "KernelRidgeModel", "gram_matrix"]


@dataclass(frozen=True)
class KernelSpec:
    """Polynomial (x1.x2 + coef0)^degree or RBF exp(-gamma * ||x1 - x2||^2)."""

    kind: str  # "poly" | "rbf"
    degree: int = 2
    coef0: float = 1.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("poly", "rbf"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "poly" and self.degree < 1:
            raise ValueError(f"poly degree must be >= 1, got {self.degree}")
        if self.kind == "rbf" and self.gamma <= 0:
            raise ValueError(f"rbf gamma must be > 0, got {self.gamma}")

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "degree": self.degree, "coef0": self.coef0, "gamma": self.gamma}


def gram_matrix(kernel: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if kernel.kind == "poly":
        return (A @ B.T + kernel.coef0) ** kernel.degree
    sq = np.sum(A**2, axis=1)[:, None] + np.sum(B**2, axis=1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-kernel.gamma * np.maximum(sq, 0.0))


class KernelRidgeModel(TrainedModel):
    def __init__(self, spec: ModelSpec, feature_names, n: int, kernel: KernelSpec,
                 X_train: np.ndarray, dual_coef: np.ndarray):
        super().__init__(spec, feature_names, n)
        self.kernel = kernel
        self.X_train = np.asarray(X_train, dtype=float)
        self.dual_coef = np.asarray(dual_coef, dtype=float)
        self.X_train.setflags(write=False)
        self.dual_coef.setflags(write=False)

    def predict(self, X: np.ndarray) -> np.ndarray:
        K = gram_matrix(self.kernel, self._check_input(X), self.X_train)
        return K @ self.dual_coef

    def params_json(self) -> dict:
        return {
            "kernel": self.kernel.to_json_dict(),
            "X_train": self.X_train.tolist(),
            "dual_coef": self.dual_coef.tolist(),
        }


def fit_kernel_ridge(data: Dataset, lam: float, kernel: KernelSpec) -> KernelRidgeModel:
    """Solve the dual system; a degree-1, coef0-0 poly kernel on centered data
    reproduces closed-form ridge predictions."""
    if lam <= 0:
        raise ValueError(f"kernel ridge penalty must be > 0, got {lam}")
    K = gram_matrix(kernel, data.features, data.features)
    bad = np.argwhere(~np.isfinite(K))
    if bad.size:
        i, j = bad[0]
        raise ValueError(f"non-finite Gram entry between rows {i} and {j}")
    alpha = np.linalg.solve(K + lam * np.eye(data.n), data.targets)
    hp = {"lam": float(lam), "degree": kernel.degree}
    if kernel.kind == "rbf":
        hp["gamma"] = kernel.gamma
    spec = ModelSpec("kernel_ridge", hyperparams=hp)
    return KernelRidgeModel(spec, data.feature_names, data.n, kernel, data.features, alpha)
