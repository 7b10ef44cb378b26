"""Hyperparameter selection with contiguous time-ordered K-fold CV.

Folds are contiguous blocks of the (time-ordered) rows, never shuffled.
The score of a spec is the RMSE over all out-of-fold predictions pooled
together. Ties prefer the least complex spec (smaller depth, larger lam),
then grid order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .base import Dataset, ModelSpec

__all__ = ["cross_validate", "CVResult"]


@dataclass(frozen=True)
class CVResult:
    best: ModelSpec
    table: tuple[dict, ...]  # one row per grid point: spec json + score


def _complexity_key(spec: ModelSpec) -> tuple:
    depth = spec.get("max_depth", 0)
    lam = spec.get("lam", 0.0)
    return (depth, -lam)


def cross_validate(data: Dataset, grid: Sequence[ModelSpec], K: int) -> CVResult:
    from . import fit  # local import: avoids module cycle

    if not grid:
        raise ValueError("empty hyperparameter grid")
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    if data.n < K:
        raise ValueError(f"need at least K={K} rows, got {data.n}")

    folds = np.array_split(np.arange(data.n), K)
    rows = []
    scored: list[tuple[tuple, ModelSpec]] = []
    for gi, spec in enumerate(grid):
        sq_errors: list[np.ndarray] = []
        for fold in folds:
            train = np.setdiff1d(np.arange(data.n), fold)
            model = fit(spec, data.subset(train))
            pred = model.predict(data.features[fold])
            sq_errors.append((pred - data.targets[fold]) ** 2)
        rmse = float(np.sqrt(np.mean(np.concatenate(sq_errors))))
        rows.append({"spec": spec.to_json_dict(), "rmse": rmse})
        scored.append(((rmse, *_complexity_key(spec), gi), spec))

    best = min(scored, key=lambda t: t[0])[1]
    return CVResult(best=best, table=tuple(rows))
