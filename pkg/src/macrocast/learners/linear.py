"""Linear learners: OLS and the regularized family.

Objectives (no sample-size scaling, intercept never penalized):

    ridge       ||y - Xb||^2 + lam * ||b||_2^2
    lasso       ||y - Xb||^2 + lam * ||b||_1
    elasticnet  ||y - Xb||^2 + lam * (rho * ||b||_2^2 + (1 - rho) * ||b||_1)

Ridge is solved in closed form on centered data. Lasso/elasticnet run
cyclic coordinate descent with soft-threshold updates on internally
standardized columns; the per-coordinate penalties are rescaled so the
optimum of the raw objective above is returned.
"""

from __future__ import annotations

import numpy as np

from .base import Dataset, LossKind, ModelSpec, TrainedModel

__all__ = ["fit_ols", "fit_ridge", "fit_lasso", "fit_elasticnet", "LinearModel"]

CD_TOL = 1e-8
CD_MAX_SWEEPS = 10_000


class LinearModel(TrainedModel):
    def __init__(self, spec: ModelSpec, feature_names, n: int, coef: np.ndarray, intercept: float):
        super().__init__(spec, feature_names, n)
        self.coef = np.asarray(coef, dtype=float)
        self.coef.setflags(write=False)
        self.intercept = float(intercept)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self._check_input(X) @ self.coef + self.intercept

    def params_json(self) -> dict:
        return {"coef": self.coef.tolist(), "intercept": self.intercept}


def fit_ols(data: Dataset, family: str = "ols") -> LinearModel:
    """Least squares with intercept; requires full column rank and n > d."""
    X, y = data.features, data.targets
    n, d = X.shape
    if n <= d:
        raise ValueError(f"OLS needs n > d, got n={n}, d={d}")
    design = np.column_stack([np.ones(n), X])
    if np.linalg.matrix_rank(design) < d + 1:
        raise ValueError("design matrix is rank deficient; use fit_ridge with lam > 0")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    spec = ModelSpec(family if family in ("ar", "ols") else "ols")
    return LinearModel(spec, data.feature_names, n, coef[1:], coef[0])


def fit_ridge(data: Dataset, lam: float) -> LinearModel:
    """Closed-form ridge on centered data; lam=0 reduces to OLS."""
    if lam < 0:
        raise ValueError(f"ridge penalty must be >= 0, got {lam}")
    X, y = data.features, data.targets
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    if lam == 0:
        coef, *_ = np.linalg.lstsq(Xc, yc, rcond=None)
    else:
        d = X.shape[1]
        coef = np.linalg.solve(Xc.T @ Xc + lam * np.eye(d), Xc.T @ yc)
    spec = ModelSpec("ridge", hyperparams={"lam": float(lam)})
    return LinearModel(spec, data.feature_names, data.n, coef, y_mean - x_mean @ coef)


def _coordinate_descent(Xc: np.ndarray, yc: np.ndarray, lam: float, rho: float) -> np.ndarray:
    """Minimize the elasticnet objective on centered data.

    Columns are scaled to unit standard deviation for conditioning; the l1/l2
    penalties pick up 1/s and 1/s^2 factors so the raw-space objective is
    unchanged. Convergence: max standardized-coefficient change < 1e-8.
    """
    n, d = Xc.shape
    stds = Xc.std(axis=0)
    active = stds > 0
    Xs = np.where(active, Xc / np.where(active, stds, 1.0), 0.0)
    col_sq = (Xs**2).sum(axis=0)

    l1 = np.where(active, lam * (1.0 - rho) / np.where(active, stds, 1.0), 0.0)
    l2 = np.where(active, lam * rho / np.where(active, stds**2, 1.0), 0.0)

    beta = np.zeros(d)
    resid = yc.copy()
    for _sweep in range(CD_MAX_SWEEPS):
        max_delta = 0.0
        for j in range(d):
            if not active[j]:
                continue
            old = beta[j]
            z = Xs[:, j] @ resid + col_sq[j] * old
            thr = 0.5 * l1[j]
            shrunk = np.sign(z) * max(abs(z) - thr, 0.0)
            new = shrunk / (col_sq[j] + l2[j])
            if new != old:
                resid += Xs[:, j] * (old - new)
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < CD_TOL:
            break
    else:
        raise RuntimeError(
            f"coordinate descent did not converge in {CD_MAX_SWEEPS} sweeps "
            f"(last max delta {max_delta:.3e})"
        )
    return np.where(active, beta / np.where(active, stds, 1.0), 0.0)


def fit_elasticnet(data: Dataset, lam: float, rho: float) -> LinearModel:
    """Elasticnet via cyclic coordinate descent; rho=1 is ridge, rho=0 lasso."""
    if lam < 0:
        raise ValueError(f"penalty must be >= 0, got {lam}")
    if not 0 <= rho <= 1:
        raise ValueError(f"rho must be in [0, 1], got {rho}")
    X, y = data.features, data.targets
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    coef = _coordinate_descent(X - x_mean, y - y_mean, lam, rho)
    spec = ModelSpec("elasticnet", hyperparams={"lam": float(lam), "rho": float(rho)})
    return LinearModel(spec, data.feature_names, data.n, coef, y_mean - x_mean @ coef)


def fit_lasso(data: Dataset, lam: float) -> LinearModel:
    """Lasso = elasticnet at rho=0."""
    model = fit_elasticnet(data, lam, rho=0.0)
    spec = ModelSpec("lasso", hyperparams={"lam": float(lam)})
    return LinearModel(spec, data.feature_names, data.n, model.coef, model.intercept)


def penalized_objective(
    data: Dataset, coef: np.ndarray, intercept: float, lam: float, rho: float
) -> float:
    """Raw elasticnet objective value (shared by the descent property tests)."""
    resid = data.targets - data.features @ coef - intercept
    return float(
        resid @ resid + lam * (rho * coef @ coef + (1 - rho) * np.abs(coef).sum())
    )
