"""Mixed (mean/median) and performance-weighted forecast combinations.

Weighted combiners score each member by its realized loss over the
previous m forecast quarters: reciprocal weights w_j ~ 1 / sum(L_j), or
softmin weights w_j ~ exp(-beta * sum(L_j)). During warm-up the available
k < m quarters are used; with no history the weights are uniform (logged).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dates import QuarterDate
from .learners import LossKind
from .pipeline import ForecastRecord

logger = logging.getLogger(__name__)

__all__ = [
    "EnsembleSpec",
    "combine_static",
    "weights_reciprocal",
    "weights_exponential",
    "weighted_forecast",
]

ZERO_LOSS_FLOOR = 1e-9


@dataclass(frozen=True)
class EnsembleSpec:
    """A combination rule over a member model group."""

    ensemble_id: str
    member_ids: tuple[str, ...]
    kind: str  # "mean" | "median" | "weighted_reciprocal" | "weighted_exponential"
    m: int = 4
    beta: float = 1.0
    loss_for_weights: LossKind = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if len(self.member_ids) < 2:
            raise ValueError("an ensemble needs at least 2 members")
        if len(set(self.member_ids)) != len(self.member_ids):
            raise ValueError("duplicate ensemble members")
        if self.kind not in ("mean", "median", "weighted_reciprocal", "weighted_exponential"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.kind.startswith("weighted") and self.m < 1:
            raise ValueError(f"weight window m must be >= 1, got {self.m}")
        if self.kind == "weighted_exponential" and self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.loss_for_weights is None:
            object.__setattr__(self, "loss_for_weights", LossKind.absolute())


def _group_by_quarter(
    records: Sequence[ForecastRecord], member_ids: Sequence[str]
) -> dict[QuarterDate, dict[str, ForecastRecord]]:
    wanted = set(member_ids)
    grouped: dict[QuarterDate, dict[str, ForecastRecord]] = {}
    for r in records:
        if r.model_id in wanted:
            grouped.setdefault(r.target_date, {})[r.model_id] = r
    return grouped


def _require_complete(
    grouped: dict[QuarterDate, dict[str, ForecastRecord]], member_ids: Sequence[str]
) -> None:
    for q in sorted(grouped):
        missing = [m for m in member_ids if m not in grouped[q]]
        if missing:
            raise ValueError(f"quarter {q}: missing member prediction(s) {missing}")


def _combined_record(
    ensemble_id: str, members: dict[str, ForecastRecord], prediction: float
) -> ForecastRecord:
    any_rec = next(iter(members.values()))
    return ForecastRecord(
        model_id=ensemble_id,
        origin=any_rec.origin,
        target_date=any_rec.target_date,
        horizon=any_rec.horizon,
        prediction=float(prediction),
        actual=any_rec.actual,
    )


def combine_static(
    records: Sequence[ForecastRecord],
    member_ids: Sequence[str],
    kind: str,
    ensemble_id: str,
) -> list[ForecastRecord]:
    """Per-quarter mean or median of the members (all must be present)."""
    if kind not in ("mean", "median"):
        raise ValueError(f"static combiner must be mean or median, got {kind!r}")
    grouped = _group_by_quarter(records, member_ids)
    _require_complete(grouped, member_ids)
    out = []
    for q in sorted(grouped):
        preds = np.array([grouped[q][m].prediction for m in member_ids])
        value = float(np.mean(preds)) if kind == "mean" else float(np.median(preds))
        out.append(_combined_record(ensemble_id, grouped[q], value))
    return out


def weights_reciprocal(past_losses: np.ndarray) -> np.ndarray:
    """w_j proportional to 1 / sum of past losses (zero sums floored)."""
    sums = np.asarray(past_losses, dtype=float)
    if np.any(sums < 0):
        raise ValueError("loss sums must be nonnegative")
    inv = 1.0 / np.maximum(sums, ZERO_LOSS_FLOOR)
    return inv / inv.sum()


def weights_exponential(past_losses: np.ndarray, beta: float) -> np.ndarray:
    """Softmin weights exp(-beta * sum L); shift-invariant and overflow-safe."""
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    sums = np.asarray(past_losses, dtype=float)
    z = np.exp(-beta * (sums - sums.min()))
    return z / z.sum()


def weighted_forecast(
    records: Sequence[ForecastRecord], spec: EnsembleSpec
) -> list[ForecastRecord]:
    """Convex member combination with weights from recent realized losses."""
    if not spec.kind.startswith("weighted"):
        raise ValueError(f"weighted_forecast needs a weighted spec, got {spec.kind!r}")
    grouped = _group_by_quarter(records, spec.member_ids)
    _require_complete(grouped, spec.member_ids)
    loss = spec.loss_for_weights
    quarters = sorted(grouped)
    out = []
    for qi, q in enumerate(quarters):
        history = [
            p
            for p in quarters[:qi]
            if all(grouped[p][mid].actual is not None for mid in spec.member_ids)
        ][-spec.m :]
        if not history:
            weights = np.full(len(spec.member_ids), 1.0 / len(spec.member_ids))
            logger.info("%s: no realized history at %s; uniform weights", spec.ensemble_id, q)
        else:
            sums = np.zeros(len(spec.member_ids))
            for p in history:
                for j, mid in enumerate(spec.member_ids):
                    rec = grouped[p][mid]
                    sums[j] += loss.evaluate(np.array([rec.actual]), np.array([rec.prediction]))
            if spec.kind == "weighted_reciprocal":
                weights = weights_reciprocal(sums)
            else:
                weights = weights_exponential(sums, spec.beta)
        preds = np.array([grouped[q][m].prediction for m in spec.member_ids])
        out.append(_combined_record(spec.ensemble_id, grouped[q], float(weights @ preds)))
    return out
