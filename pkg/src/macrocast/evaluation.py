"""Forecast evaluation: RMSE/MAE slices, OLS, the inclusive (encompassing)
test, the model-fixed-effects panel regression, and external comparisons.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .dates import QuarterDate
from .pipeline import ForecastRecord

__all__ = [
    "PeriodSlice",
    "MetricRow",
    "MetricReport",
    "RegressionResult",
    "PERIOD_PRESETS",
    "compute_metrics",
    "ols",
    "inclusive_test",
    "panel_fe_regression",
    "compare_external",
    "read_external_csv",
]


@dataclass(frozen=True)
class PeriodSlice:
    label: str
    start: QuarterDate
    end: QuarterDate

    def __contains__(self, q: QuarterDate) -> bool:
        return not (q < self.start or self.end < q)


def _preset(label: str, start: str, end: str) -> PeriodSlice:
    return PeriodSlice(label, QuarterDate.parse(start), QuarterDate.parse(end))


# The report windows used throughout the evaluation tables.
PERIOD_PRESETS: tuple[PeriodSlice, ...] = (
    _preset("1996-1999", "1996Q1", "1999Q4"),
    _preset("1997-1998", "1997Q1", "1998Q4"),
    _preset("2000-2003", "2000Q1", "2003Q4"),
    _preset("2004-2009", "2004Q1", "2009Q4"),
    _preset("2005Q3-2015Q4", "2005Q3", "2015Q4"),
    _preset("2008-2010", "2008Q1", "2010Q4"),
    _preset("2014-2019", "2014Q1", "2019Q4"),
    _preset("2020-2022", "2020Q1", "2022Q4"),
    _preset("2023", "2023Q1", "2023Q4"),
)


@dataclass(frozen=True)
class MetricRow:
    model_id: str
    period: str
    rmse: float | None
    mae: float | None
    n_obs: int

    def __post_init__(self) -> None:
        if self.n_obs > 0 and self.rmse is not None and self.mae is not None:
            # power-mean inequality, with float slack
            if self.rmse < self.mae - 1e-9 * max(1.0, self.mae):
                raise ValueError(
                    f"rmse {self.rmse} < mae {self.mae} for {self.model_id}/{self.period}"
                )


@dataclass(frozen=True)
class MetricReport:
    rows: tuple[MetricRow, ...]

    def lookup(self, model_id: str, period: str) -> MetricRow:
        for row in self.rows:
            if row.model_id == model_id and row.period == period:
                return row
        raise KeyError(f"no metrics for ({model_id!r}, {period!r})")


def _errors_in_slice(
    records: Sequence[ForecastRecord], model_id: str, period: PeriodSlice | None
) -> np.ndarray:
    errs = []
    for r in records:
        if r.model_id != model_id:
            continue
        if period is not None and r.target_date not in period:
            continue
        if r.actual is None:
            raise ValueError(f"record {r.model_id}@{r.target_date} has no actual")
        errs.append(r.actual - r.prediction)
    return np.array(errs)


def compute_metrics(
    records: Sequence[ForecastRecord],
    periods: Sequence[PeriodSlice] | None = None,
    models: Sequence[str] | None = None,
) -> MetricReport:
    """RMSE and MAE per (model, period); empty slices report n_obs=0 with
    null metrics (never NaN)."""
    if models is None:
        models = sorted({r.model_id for r in records})
    slices: list[PeriodSlice | None] = list(periods) if periods else [None]
    rows = []
    for model_id in models:
        for period in slices:
            label = period.label if period is not None else "full"
            e = _errors_in_slice(records, model_id, period)
            if e.size == 0:
                rows.append(MetricRow(model_id, label, None, None, 0))
            else:
                rows.append(
                    MetricRow(
                        model_id,
                        label,
                        float(np.sqrt(np.mean(e**2))),
                        float(np.mean(np.abs(e))),
                        int(e.size),
                    )
                )
    return MetricReport(tuple(rows))


@dataclass(frozen=True)
class RegressionResult:
    names: tuple[str, ...]
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    df_resid: int
    r_squared: float

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])


def ols(
    y: np.ndarray,
    X: np.ndarray,
    names: Sequence[str] | None = None,
    intercept: bool = True,
    robust: bool = False,
) -> RegressionResult:
    """Classical OLS; homoskedastic SEs by default, HC1 with robust=True."""
    y = np.asarray(y, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} rows vs {y.shape[0]} targets")
    if names is None:
        names = [f"x{j}" for j in range(X.shape[1])]
    names = list(names)
    if intercept:
        X = np.column_stack([np.ones(len(y)), X])
        names = ["const"] + names
    n, k = X.shape
    rank = np.linalg.matrix_rank(X)
    if rank < k:
        raise ValueError(f"design matrix rank {rank} < {k} columns")
    if n <= k:
        raise ValueError(f"need n > rank, got n={n}, k={k}")
    XtX_inv = np.linalg.inv(X.T @ X)
    beta = XtX_inv @ (X.T @ y)
    resid = y - X @ beta
    df = n - k
    if robust:
        meat = (X * resid[:, None] ** 2).T @ X
        cov = XtX_inv @ meat @ XtX_inv * (n / df)
    else:
        sigma2 = float(resid @ resid) / df
        cov = XtX_inv * sigma2
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.where(beta == 0, 0.0, np.inf * np.sign(beta)))
    p = np.where(np.isinf(t), 0.0, 2.0 * stats.t.sf(np.abs(t), df))
    tss = float(((y - y.mean()) ** 2).sum()) if intercept else float((y**2).sum())
    r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else 1.0
    return RegressionResult(tuple(names), beta, se, t, p, df, r2)


def inclusive_test(
    errors_i: np.ndarray, errors_j: np.ndarray, intercept: bool = False
) -> RegressionResult:
    """Regress e_i on (e_i - e_j); the slope estimates (1 - lambda).

    A coefficient near 0 says forecast i's errors carry none of the
    information gap, i.e. i encompasses j. Default has no intercept,
    matching the regression as written.
    """
    e_i = np.asarray(errors_i, dtype=float)
    e_j = np.asarray(errors_j, dtype=float)
    if e_i.shape != e_j.shape:
        raise ValueError("error series must be aligned and equal length")
    if e_i.size < 5:
        raise ValueError(f"need at least 5 observations, got {e_i.size}")
    diff = e_i - e_j
    if np.allclose(diff, 0.0):
        raise ValueError("degenerate comparison: identical error series")
    return ols(e_i, diff[:, None], names=["one_minus_lambda"], intercept=intercept)


@dataclass(frozen=True)
class PanelCell:
    model_id: str
    time: QuarterDate
    horizon: int
    value: float  # SE or AE of that forecast


def panel_fe_regression(
    cells: Sequence[PanelCell], baseline: str = "AR"
) -> RegressionResult:
    """Model fixed effects after absorbing (time, horizon) effects.

    value_{t,h,m} = alpha_m + gamma_{t,h} + eps. The baseline model's alpha
    is normalized to 0; estimates equal dummy-variable OLS (within/FWL).
    """
    models = sorted({c.model_id for c in cells})
    if baseline not in models:
        raise ValueError(f"baseline model {baseline!r} not present in the panel")
    if len(models) < 2:
        raise ValueError("need at least 2 models")
    groups = sorted({(c.time, c.horizon) for c in cells}, key=lambda g: (g[0].index, g[1]))
    group_idx = {g: i for i, g in enumerate(groups)}
    others = [m for m in models if m != baseline]
    model_idx = {m: j for j, m in enumerate(others)}

    n = len(cells)
    y = np.array([c.value for c in cells], dtype=float)
    D = np.zeros((n, len(others)))
    g = np.empty(n, dtype=int)
    for i, c in enumerate(cells):
        g[i] = group_idx[(c.time, c.horizon)]
        if c.model_id != baseline:
            D[i, model_idx[c.model_id]] = 1.0

    # within transformation: demean y and the model dummies by (t, h) group
    counts = np.bincount(g, minlength=len(groups)).astype(float)
    y_dm = y - (np.bincount(g, weights=y) / counts)[g]
    D_dm = np.empty_like(D)
    for j in range(D.shape[1]):
        D_dm[:, j] = D[:, j] - (np.bincount(g, weights=D[:, j]) / counts)[g]

    k = D.shape[1]
    rank = np.linalg.matrix_rank(D_dm)
    if rank < k:
        raise ValueError("model dummies collinear after absorbing time effects")
    XtX_inv = np.linalg.inv(D_dm.T @ D_dm)
    alpha = XtX_inv @ (D_dm.T @ y_dm)
    resid = y_dm - D_dm @ alpha
    df = n - len(groups) - k  # absorbed group means + model effects
    if df <= 0:
        # saturated panel: estimates are exact mean differences, no SEs
        nan = np.full(k, np.nan)
        tss = float(y_dm @ y_dm)
        return RegressionResult(tuple(others), alpha, nan, nan, nan, 0, 1.0 if tss > 0 else 1.0)
    sigma2 = float(resid @ resid) / df
    se = np.sqrt(np.clip(np.diag(XtX_inv) * sigma2, 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, alpha / se, np.where(alpha == 0, 0.0, np.inf * np.sign(alpha)))
    p = np.where(np.isinf(t), 0.0, 2.0 * stats.t.sf(np.abs(t), df))
    tss = float(y_dm @ y_dm)
    r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else 1.0
    return RegressionResult(tuple(others), alpha, se, t, p, df, r2)


def read_external_csv(path: str | Path) -> dict[QuarterDate, float]:
    """Expert-forecast file: header ``target_date,forecast``; gaps allowed."""
    out: dict[QuarterDate, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) < {"target_date", "forecast"}:
            raise ValueError(f"{path}: expected columns target_date,forecast")
        for lineno, row in enumerate(reader, start=2):
            q = QuarterDate.parse(row["target_date"])
            if q in out:
                raise ValueError(f"{path}:{lineno}: duplicate quarter {q}")
            out[q] = float(row["forecast"])
    return out


def compare_external(
    records: Sequence[ForecastRecord],
    external: Mapping[QuarterDate, float],
    external_id: str = "external",
    models: Sequence[str] | None = None,
) -> MetricReport:
    """Metrics for models and the external forecaster over the intersection
    of quarters present in both sources."""
    if models is None:
        models = sorted({r.model_id for r in records})
    by_model: dict[str, dict[QuarterDate, ForecastRecord]] = {m: {} for m in models}
    for r in records:
        if r.model_id in by_model and r.actual is not None:
            by_model[r.model_id][r.target_date] = r

    rows = []
    for model_id in models:
        recs = by_model[model_id]
        common = sorted(set(recs) & set(external), key=lambda q: q.index)
        if not common:
            raise ValueError(f"no overlapping quarters between {model_id!r} and {external_id!r}")
        e_model = np.array([recs[q].actual - recs[q].prediction for q in common])
        e_ext = np.array([recs[q].actual - external[q] for q in common])
        label = f"overlap_{external_id}"
        rows.append(
            MetricRow(
                model_id, label,
                float(np.sqrt(np.mean(e_model**2))), float(np.mean(np.abs(e_model))),
                len(common),
            )
        )
        rows.append(
            MetricRow(
                f"{external_id}_vs_{model_id}", label,
                float(np.sqrt(np.mean(e_ext**2))), float(np.mean(np.abs(e_ext))),
                len(common),
            )
        )
    return MetricReport(tuple(rows))
