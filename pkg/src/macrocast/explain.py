"""Shapley-value attribution, importance tables, and dependence curves.

The value function is interventional: v(S) is the mean model prediction
over background rows with the features in S overwritten by the instance's
values. Exact mode enumerates all 2^d subsets (d <= 14); sampled mode uses
antithetic permutation sampling and reports a Monte-Carlo standard error
per feature.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .dates import QuarterDate
from .rng import derive_rng

__all__ = [
    "Attribution",
    "ImportanceRow",
    "ImportanceTable",
    "shapley_exact",
    "shapley_sampled",
    "aggregate_importance",
    "dependence_curve",
    "time_curve",
    "default_grouping",
]

EXACT_MAX_FEATURES = 14
MIN_PERMUTATIONS = 64
_LAG_RE = re.compile(r"^(.*)_lag\d+$")


@dataclass(frozen=True)
class Attribution:
    """Per-forecast feature contributions: prediction = base_value + sum(phi)."""

    model_id: str
    target_date: QuarterDate | None
    feature_names: tuple[str, ...]
    feature_values: np.ndarray
    base_value: float
    phi: np.ndarray
    prediction: float
    mc_se: np.ndarray | None = None
    adjustment: float = 0.0

    @property
    def reconstructed(self) -> float:
        return self.base_value + float(self.phi.sum())


def _as_predict_fn(model) -> Callable[[np.ndarray], np.ndarray]:
    if callable(model) and not hasattr(model, "predict"):
        fn = model
    else:
        fn = model.predict
    return lambda X: np.asarray(fn(np.atleast_2d(X)), dtype=float)


def _check_inputs(instance: np.ndarray, background: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(instance, dtype=float).reshape(-1)
    bg = np.atleast_2d(np.asarray(background, dtype=float))
    if bg.shape[0] < 1:
        raise ValueError("background must be nonempty")
    if bg.shape[1] != x.size:
        raise ValueError(f"background has {bg.shape[1]} features, instance {x.size}")
    return x, bg


def shapley_exact(
    model,
    instance: np.ndarray,
    background: np.ndarray,
    feature_names: Sequence[str] | None = None,
    model_id: str = "model",
    target_date: QuarterDate | None = None,
) -> Attribution:
    """Exact Shapley values by subset enumeration (d <= 14)."""
    x, bg = _check_inputs(instance, background)
    d = x.size
    if d > EXACT_MAX_FEATURES:
        raise ValueError(
            f"exact enumeration supports d <= {EXACT_MAX_FEATURES}, got {d}; "
            "use shapley_sampled"
        )
    predict = _as_predict_fn(model)
    n_masks = 1 << d
    values = np.empty(n_masks)
    bits = np.array([1 << i for i in range(d)], dtype=np.int64)
    for mask in range(n_masks):
        on = (mask & bits) != 0
        Z = np.where(on, x, bg)
        values[mask] = float(np.mean(predict(Z)))

    fact = [math.factorial(k) for k in range(d + 1)]
    weight = [fact[s] * fact[d - s - 1] / fact[d] for s in range(d)]
    phi = np.zeros(d)
    for mask in range(n_masks):
        s = bin(mask).count("1")
        v_s = values[mask]
        for i in range(d):
            if not mask & (1 << i):
                phi[i] += weight[s] * (values[mask | (1 << i)] - v_s)

    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(d))
    return Attribution(
        model_id=model_id,
        target_date=target_date,
        feature_names=names,
        feature_values=x,
        base_value=float(values[0]),
        phi=phi,
        prediction=float(values[-1]),
    )


def shapley_sampled(
    model,
    instance: np.ndarray,
    background: np.ndarray,
    n_permutations: int = 4096,
    seed: int = 0,
    feature_names: Sequence[str] | None = None,
    model_id: str = "model",
    target_date: QuarterDate | None = None,
) -> Attribution:
    """Antithetic permutation-sampling estimate of the Shapley values.

    Each sampled permutation is also used reversed; the Monte-Carlo SE is
    computed over the pair averages. The telescoping walk is exactly
    efficient; any float drift is folded back proportionally to |phi| and
    reported as ``adjustment``.
    """
    if n_permutations < MIN_PERMUTATIONS:
        raise ValueError(f"need at least {MIN_PERMUTATIONS} permutations, got {n_permutations}")
    x, bg = _check_inputs(instance, background)
    d = x.size
    n_bg = bg.shape[0]
    predict = _as_predict_fn(model)
    rng = derive_rng(seed, "shapley_permutations")

    base = float(np.mean(predict(bg)))
    n_pairs = n_permutations // 2
    contrib = np.empty((n_pairs, 2, d))
    for pair in range(n_pairs):
        forward = rng.permutation(d)
        for a, perm in enumerate((forward, forward[::-1])):
            # stack the d+1 walk states into one predict call
            Z = np.tile(bg, (d + 1, 1))
            for step, feat in enumerate(perm):
                rows = slice((step + 1) * n_bg, None)
                Z[rows, feat] = x[feat]
            preds = predict(Z).reshape(d + 1, n_bg).mean(axis=1)
            contrib[pair, a, perm] = np.diff(preds)

    phi = contrib.mean(axis=(0, 1))
    pair_means = contrib.mean(axis=1)
    if n_pairs > 1:
        mc_se = pair_means.std(axis=0, ddof=1) / math.sqrt(n_pairs)
    else:
        mc_se = np.zeros(d)

    prediction = float(predict(x.reshape(1, -1))[0])
    residual = prediction - base - float(phi.sum())
    denom = float(np.abs(phi).sum())
    if denom > 0:
        phi = phi + residual * np.abs(phi) / denom
    else:
        phi = phi + residual / d
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{i}" for i in range(d))
    return Attribution(
        model_id=model_id,
        target_date=target_date,
        feature_names=names,
        feature_values=x,
        base_value=base,
        phi=phi,
        prediction=prediction,
        mc_se=mc_se,
        adjustment=abs(residual),
    )


def default_grouping(feature_names: Sequence[str]) -> dict[str, str]:
    """Fold ``{var}_lag{j}`` features into their parent variable."""
    out = {}
    for name in feature_names:
        m = _LAG_RE.match(name)
        out[name] = m.group(1) if m else name
    return out


@dataclass(frozen=True)
class ImportanceRow:
    model_id: str
    variable: str
    period: str
    value: float  # mean |signed sum of lag phis| over the slice
    top: bool

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError("importance values are nonnegative")


@dataclass(frozen=True)
class ImportanceTable:
    rows: tuple[ImportanceRow, ...]
    top_k: int

    def lookup(self, model_id: str, variable: str, period: str) -> ImportanceRow:
        for row in self.rows:
            if (row.model_id, row.variable, row.period) == (model_id, variable, period):
                return row
        raise KeyError(f"no importance row ({model_id}, {variable}, {period})")


def aggregate_importance(
    attributions: Sequence[Attribution],
    grouping: Mapping[str, str] | None = None,
    periods: Sequence | None = None,
    top_k: int = 5,
) -> ImportanceTable:
    """Global importance per (model, variable, period).

    Lag features are folded into their parent by summing phi per instance
    (signed), then averaging the absolute sums over the slice. The top-k
    variables per (model, period) are flagged.
    """
    if not attributions:
        raise ValueError("no attributions supplied")
    rows: list[ImportanceRow] = []
    by_model: dict[str, list[Attribution]] = {}
    for att in attributions:
        by_model.setdefault(att.model_id, []).append(att)

    for model_id in sorted(by_model):
        atts = by_model[model_id]
        names = atts[0].feature_names
        group = dict(grouping) if grouping is not None else default_grouping(names)
        unknown = [n for n in names if n not in group]
        if unknown:
            raise ValueError(f"features missing from grouping: {unknown}")
        variables = sorted(set(group.values()))
        var_cols = {
            v: [i for i, n in enumerate(names) if group[n] == v] for v in variables
        }
        slices = list(periods) if periods else [None]
        for period in slices:
            label = getattr(period, "label", "full") if period is not None else "full"
            sel = [
                a
                for a in atts
                if period is None or (a.target_date is not None and a.target_date in period)
            ]
            if not sel:
                continue
            scores = {}
            for v in variables:
                cols = var_cols[v]
                sums = [float(a.phi[cols].sum()) for a in sel]
                scores[v] = float(np.mean(np.abs(sums)))
            ranked = sorted(scores, key=lambda v: (-scores[v], v))
            top = set(ranked[: min(top_k, len(ranked))])
            for v in variables:
                rows.append(ImportanceRow(model_id, v, label, scores[v], v in top))
    return ImportanceTable(tuple(rows), top_k)


def _silverman_bandwidth(x: np.ndarray) -> float:
    n = x.size
    std = float(np.std(x, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25)
    spread = min(std, iqr / 1.349) if iqr > 0 else std
    if spread <= 0:
        spread = max(std, 1e-3)
    return 0.9 * spread * n ** (-0.2)


def _local_linear(x: np.ndarray, phi: np.ndarray, x_eval: np.ndarray, h: float) -> np.ndarray:
    out = np.empty(x_eval.size)
    for i, x0 in enumerate(x_eval):
        w = np.exp(-0.5 * ((x - x0) / h) ** 2)
        sw = w.sum()
        xm = (w * x).sum() / sw
        ym = (w * phi).sum() / sw
        sxx = (w * (x - xm) ** 2).sum()
        slope = (w * (x - xm) * (phi - ym)).sum() / sxx if sxx > 1e-300 else 0.0
        out[i] = ym + slope * (x0 - xm)
    return out


def dependence_curve(
    attributions: Sequence[Attribution], feature: str
) -> list[tuple[float, float, float]]:
    """(feature value, phi, smoothed phi) triples, sorted by value.

    The smoother is local linear with a Gaussian kernel at the Silverman
    bandwidth.
    """
    pts = []
    for a in attributions:
        if feature not in a.feature_names:
            raise ValueError(f"feature {feature!r} not in attribution for {a.model_id}")
        i = a.feature_names.index(feature)
        pts.append((float(a.feature_values[i]), float(a.phi[i])))
    if len(pts) < 5:
        raise ValueError(f"need at least 5 points, got {len(pts)}")
    pts.sort()
    x = np.array([p[0] for p in pts])
    phi = np.array([p[1] for p in pts])
    if np.ptp(x) == 0:
        smooth = np.full(x.size, phi.mean())
    else:
        smooth = _local_linear(x, phi, x, _silverman_bandwidth(x))
    return [(float(a), float(b), float(c)) for a, b, c in zip(x, phi, smooth)]


def time_curve(
    attributions: Sequence[Attribution], feature: str
) -> list[tuple[QuarterDate, float]]:
    """(target date, phi) pairs for a feature, in time order."""
    pts = []
    for a in attributions:
        if a.target_date is None:
            continue
        i = a.feature_names.index(feature)
        pts.append((a.target_date, float(a.phi[i])))
    pts.sort(key=lambda p: p[0].index)
    return pts
