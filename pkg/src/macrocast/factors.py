"""Static factor extraction: latent components of the standardized panel.

The panel window is standardized column-wise with statistics computed from
that window only, and factors are the leading principal components of the
standardized matrix (eigendecomposition of its covariance). A deterministic
sign convention makes fits reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["FactorFit", "RankRule", "fit_factors", "transform"]


@dataclass(frozen=True)
class RankRule:
    """Either a fixed rank or the smallest rank reaching a variance threshold."""

    kind: str  # "fixed" | "variance_threshold"
    r: int | None = None
    tau: float | None = None
    max_rank: int = 8

    @classmethod
    def fixed(cls, r: int) -> "RankRule":
        if r < 1:
            raise ValueError(f"rank must be >= 1, got {r}")
        return cls(kind="fixed", r=r)

    @classmethod
    def variance_threshold(cls, tau: float, max_rank: int = 8) -> "RankRule":
        if not 0.0 < tau <= 1.0:
            raise ValueError(f"variance threshold must be in (0, 1], got {tau}")
        return cls(kind="variance_threshold", tau=tau, max_rank=max_rank)


DEFAULT_RANK_RULE = RankRule.variance_threshold(0.80, max_rank=8)


@dataclass(frozen=True)
class FactorFit:
    """Loadings, factor scores, and the standardization stats that produced them."""

    columns: tuple[str, ...]
    loadings: np.ndarray  # n_vars x r
    factors: np.ndarray  # T x r, scores of the fitting window
    col_means: np.ndarray
    col_stds: np.ndarray
    explained_variance_ratio: np.ndarray
    rank: int

    def __post_init__(self) -> None:
        n, r = self.loadings.shape
        if r != self.rank or self.factors.shape[1] != r:
            raise ValueError("inconsistent factor rank")
        if np.any(self.col_stds <= 0):
            raise ValueError("column stds must be strictly positive")
        evr = self.explained_variance_ratio
        if np.any(np.diff(evr) > 1e-12) or np.any(evr <= 0) or evr.sum() > 1 + 1e-9:
            raise ValueError("explained variance ratios must be nonincreasing in (0, 1]")
        for arr in (self.loadings, self.factors, self.col_means, self.col_stds, evr):
            arr.setflags(write=False)

    def to_json_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "loadings": self.loadings.tolist(),
            "col_means": self.col_means.tolist(),
            "col_stds": self.col_stds.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
            "rank": self.rank,
        }


def fit_factors(
    rows: np.ndarray,
    columns: Sequence[str],
    rank_rule: RankRule = DEFAULT_RANK_RULE,
) -> FactorFit:
    """Extract principal-component factors from a complete panel window.

    ``rows`` is the T x n_vars window (no missing cells). Standardization
    uses only these rows. Each loading column is signed so its
    largest-magnitude entry is positive.
    """
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2:
        raise ValueError("rows must be 2-D")
    T, n = X.shape
    if len(columns) != n:
        raise ValueError(f"{len(columns)} column names for {n} columns")
    if not np.all(np.isfinite(X)):
        raise ValueError("factor window contains missing or non-finite cells")

    means = X.mean(axis=0)
    stds = X.std(axis=0)
    for j, s in enumerate(stds):
        if s == 0:
            raise ValueError(f"constant column {columns[j]!r} in factor window")
    Z = (X - means) / stds

    cov = Z.T @ Z / T
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    ratios = eigvals / eigvals.sum()

    if rank_rule.kind == "fixed":
        r = rank_rule.r
        if r > n:
            raise ValueError(f"requested rank {r} exceeds {n} variables")
    elif rank_rule.kind == "variance_threshold":
        cum = np.cumsum(ratios)
        r = int(np.searchsorted(cum, rank_rule.tau - 1e-12) + 1)
        r = min(r, rank_rule.max_rank, n)
    else:
        raise ValueError(f"unknown rank rule {rank_rule.kind!r}")
    if T < r + 2:
        raise ValueError(f"window has {T} rows, needs at least rank+2 = {r + 2}")

    V = eigvecs[:, :r].copy()
    for k in range(r):
        top = np.argmax(np.abs(V[:, k]))
        if V[top, k] < 0:
            V[:, k] = -V[:, k]
    F = Z @ V

    return FactorFit(
        columns=tuple(columns),
        loadings=V,
        factors=F,
        col_means=means,
        col_stds=stds,
        explained_variance_ratio=ratios[:r],
        rank=r,
    )


def transform(fit: FactorFit, rows: np.ndarray, columns: Sequence[str]) -> np.ndarray:
    """Score new rows with a fitted factor model.

    Applies the fit's standardization then projects onto the loadings;
    scoring the training rows reproduces the stored factors.
    """
    if tuple(columns) != fit.columns:
        raise ValueError(f"column mismatch: fit has {fit.columns}, got {tuple(columns)}")
    X = np.atleast_2d(np.asarray(rows, dtype=float))
    if X.shape[1] != len(fit.columns):
        raise ValueError(f"expected {len(fit.columns)} columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("rows to transform contain missing cells")
    Z = (X - fit.col_means) / fit.col_stds
    return Z @ fit.loadings
