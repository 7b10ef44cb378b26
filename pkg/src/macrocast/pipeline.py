"""Lag features, the expanding-window backtest, and run persistence.

Feature naming: ``y_lag1`` is the target at the forecast origin, ``y_lag2``
one quarter earlier, and so on (p_y columns). Indicator and factor columns
are 0-based from the origin: ``{var}_lag0`` is the contemporaneous value,
up to ``p_x`` (indicators) or ``p_f`` (factors). The training target is the
panel target ``horizon`` quarters after the origin.

Backtest discipline: for a forecast quarter q, training rows have target
date < q, the forecast input is the feature row at origin q - horizon, and
factor estimation, standardization, and CV see only data dated < q.
"""

from __future__ import annotations

import getpass
import hashlib
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import Panel
from .dates import QuarterDate
from .factors import DEFAULT_RANK_RULE, FactorFit, RankRule, fit_factors, transform
from .learners import Dataset, ModelSpec, TrainedModel, cross_validate, fit, model_hash

logger = logging.getLogger(__name__)

__all__ = [
    "FeatureSpec",
    "BacktestPlan",
    "BacktestModel",
    "ForecastRecord",
    "IntegrityError",
    "build_features",
    "build_forecast_input",
    "run_backtest",
    "persist_run",
    "load_run",
    "records_to_csv_text",
]

MODES = ("raw_indicators", "factor_augmented", "target_only")


class IntegrityError(RuntimeError):
    """A persisted run fails its manifest hash check."""


@dataclass(frozen=True)
class FeatureSpec:
    p_y: int = 4
    p_x: int = 1
    p_f: int = 1
    horizon: int = 1
    mode: str = "raw_indicators"

    def __post_init__(self) -> None:
        if self.p_y < 1:
            raise ValueError(f"p_y must be >= 1, got {self.p_y}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.p_x < 0 or self.p_f < 0:
            raise ValueError("lag orders must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"unknown feature mode {self.mode!r}")

    @property
    def max_back(self) -> int:
        """Quarters of history a feature row reaches behind its origin."""
        back = self.p_y - 1
        if self.mode == "raw_indicators":
            back = max(back, self.p_x)
        elif self.mode == "factor_augmented":
            back = max(back, self.p_f)
        return back


@dataclass(frozen=True)
class BacktestSegment:
    train_start: QuarterDate
    forecast_start: QuarterDate
    forecast_end: QuarterDate

    def __post_init__(self) -> None:
        if not (self.train_start < self.forecast_start):
            raise ValueError(f"train_start {self.train_start} must precede {self.forecast_start}")
        if self.forecast_end < self.forecast_start:
            raise ValueError("forecast_end before forecast_start")


@dataclass(frozen=True)
class BacktestPlan:
    segments: tuple[BacktestSegment, ...]
    refit_every: int = 1
    min_train_rows: int = 12
    continuous_expanding: bool = False  # train from the first segment's start instead

    def __post_init__(self) -> None:
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")
        prev_end = None
        for seg in self.segments:
            if prev_end is not None and not (prev_end < seg.forecast_start):
                raise ValueError("segment forecast ranges overlap")
            prev_end = seg.forecast_end


def figure_plan_1992_2023() -> BacktestPlan:
    """The four-segment plan: segments (a) 1992/1996-1999, (b) 1996/2000-2003,
    (c) 2000/2004-2009, (d) 2005/2010-2023; 112 forecast quarters."""
    q = QuarterDate
    return BacktestPlan(
        segments=(
            BacktestSegment(q(1992, 1), q(1996, 1), q(1999, 4)),
            BacktestSegment(q(1996, 1), q(2000, 1), q(2003, 4)),
            BacktestSegment(q(2000, 1), q(2004, 1), q(2009, 4)),
            BacktestSegment(q(2005, 1), q(2010, 1), q(2023, 4)),
        )
    )


@dataclass(frozen=True)
class BacktestModel:
    """One roster entry: spec + feature recipe (+ optional CV grid)."""

    model_id: str
    spec: ModelSpec
    features: FeatureSpec
    grid: tuple[ModelSpec, ...] = ()
    cv_folds: int = 5
    rank_rule: RankRule = DEFAULT_RANK_RULE


@dataclass(frozen=True)
class ForecastRecord:
    model_id: str
    origin: QuarterDate
    target_date: QuarterDate
    horizon: int
    prediction: float
    actual: float | None = None

    def __post_init__(self) -> None:
        if self.target_date != self.origin.advance(self.horizon):
            raise ValueError("target_date must equal origin advanced by horizon")
        if not np.isfinite(self.prediction):
            raise ValueError(f"non-finite prediction for {self.model_id} at {self.target_date}")

    @property
    def error(self) -> float | None:
        return None if self.actual is None else self.actual - self.prediction


def _factor_scores_by_date(panel: Panel, fit_: FactorFit) -> np.ndarray:
    """Factor scores per panel row; NaN where the indicator row is incomplete."""
    cols = [panel.col_index(c) for c in fit_.columns]
    X = panel.values[:, cols]
    complete = np.all(np.isfinite(X), axis=1)
    out = np.full((len(panel.index), fit_.rank), np.nan)
    if complete.any():
        out[complete] = transform(fit_, X[complete], fit_.columns)
    return out


def _feature_sources(
    panel: Panel, spec: FeatureSpec, factor_fit: FactorFit | None
) -> tuple[list[str], list[np.ndarray], list[int]]:
    """Per-feature (name, source series over the panel index, lag)."""
    names: list[str] = []
    sources: list[np.ndarray] = []
    lags: list[int] = []
    y = panel.target
    for j in range(1, spec.p_y + 1):
        names.append(f"y_lag{j}")
        sources.append(y)
        lags.append(j - 1)
    if spec.mode == "raw_indicators":
        for var in panel.indicator_columns:
            col = panel.column(var)
            for j in range(spec.p_x + 1):
                names.append(f"{var}_lag{j}")
                sources.append(col)
                lags.append(j)
    elif spec.mode == "factor_augmented":
        if factor_fit is None:
            raise ValueError("factor_augmented mode requires a FactorFit")
        scores = _factor_scores_by_date(panel, factor_fit)
        for k in range(factor_fit.rank):
            for j in range(spec.p_f + 1):
                names.append(f"F{k + 1}_lag{j}")
                sources.append(scores[:, k])
                lags.append(j)
    return names, sources, lags


def _assemble_rows(
    panel: Panel,
    spec: FeatureSpec,
    factor_fit: FactorFit | None,
    first_origin: QuarterDate | None = None,
    last_origin: QuarterDate | None = None,
) -> tuple[list[QuarterDate], np.ndarray, np.ndarray]:
    """(origins, X, y_target) for origins whose full lag window and target exist."""
    names, sources, lags = _feature_sources(panel, spec, factor_fit)
    T = len(panel.index)
    lo = max(spec.max_back, 0 if first_origin is None else first_origin - panel.index[0])
    hi = T - 1 - spec.horizon
    if last_origin is not None:
        hi = min(hi, last_origin - panel.index[0])
    if hi < lo:
        return [], np.empty((0, len(names))), np.empty(0)
    X = np.column_stack([src[lo - lag : hi - lag + 1] for src, lag in zip(sources, lags)])
    y = panel.target[lo + spec.horizon : hi + spec.horizon + 1]
    keep = np.all(np.isfinite(X), axis=1) & np.isfinite(y)
    origins = [panel.index[t] for t in np.flatnonzero(keep) + lo]
    return origins, X[keep], y[keep].astype(float)


def build_features(
    panel: Panel, spec: FeatureSpec, factor_fit: FactorFit | None = None
) -> Dataset:
    """Training design over all usable origins (rows with any unavailable
    lag or target are dropped, never imputed)."""
    names, _, _ = _feature_sources(panel, spec, factor_fit)
    origins, X, y = _assemble_rows(panel, spec, factor_fit)
    if not origins:
        span = len(panel.index)
        raise ValueError(
            f"no usable feature rows: panel spans {span} quarters, needs more than "
            f"max_back={spec.max_back} + horizon={spec.horizon} complete ones"
        )
    return Dataset(X, y, tuple(names))


def build_forecast_input(
    panel: Panel, spec: FeatureSpec, origin: QuarterDate, factor_fit: FactorFit | None = None
) -> np.ndarray:
    """The 1 x d feature row at ``origin`` (target not required)."""
    names, sources, lags = _feature_sources(panel, spec, factor_fit)
    t = panel.row_of(origin)
    if t - spec.max_back < 0:
        raise ValueError(f"origin {origin} lacks {spec.max_back} quarters of history")
    feat = np.array([src[t - lag] for src, lag in zip(sources, lags)])
    if not np.all(np.isfinite(feat)):
        missing = [names[i] for i in np.flatnonzero(~np.isfinite(feat))]
        raise ValueError(f"missing features at origin {origin}: {missing}")
    return feat.reshape(1, -1)


def _fit_factors_at(
    panel: Panel, train_start: QuarterDate, origin: QuarterDate, rank_rule: RankRule
) -> FactorFit:
    """Factors from completely observed indicator rows in [train_start, origin]."""
    cols = panel.indicator_columns
    if not cols:
        raise ValueError("panel has no indicator columns to extract factors from")
    idx = [panel.col_index(c) for c in cols]
    lo = max(0, train_start - panel.index[0])
    hi = panel.row_of(origin)
    X = panel.values[lo : hi + 1, idx]
    complete = np.all(np.isfinite(X), axis=1)
    X = X[complete]
    if X.shape[0] < 3:
        raise ValueError(f"only {X.shape[0]} complete indicator rows before {origin}")
    return fit_factors(X, cols, rank_rule)


def _run_one_model(
    panel: Panel, plan: BacktestPlan, model: BacktestModel
) -> list[ForecastRecord]:
    records: list[ForecastRecord] = []
    fspec = model.features
    h = fspec.horizon
    first_start = plan.segments[0].train_start
    for seg in plan.segments:
        train_start = first_start if plan.continuous_expanding else seg.train_start
        fitted: TrainedModel | None = None
        ffit: FactorFit | None = None
        steps_since_fit = 0
        for q in QuarterDate.range(seg.forecast_start, seg.forecast_end):
            origin = q.advance(-h)
            try:
                panel.row_of(origin)
            except KeyError:
                continue
            need_fit = fitted is None or steps_since_fit >= plan.refit_every
            if need_fit:
                if fspec.mode == "factor_augmented":
                    try:
                        ffit = _fit_factors_at(panel, train_start, origin, model.rank_rule)
                    except ValueError as exc:
                        logger.warning("%s: factor fit deferred at %s: %s", model.model_id, q, exc)
                        fitted = None
                        continue
                origins, X, y = _assemble_rows(
                    panel, fspec, ffit, first_origin=train_start, last_origin=origin.advance(-1)
                )
                if len(origins) < plan.min_train_rows:
                    logger.warning(
                        "%s: %d training rows at %s < floor %d; deferring",
                        model.model_id, len(origins), q, plan.min_train_rows,
                    )
                    continue
                names, _, _ = _feature_sources(panel, fspec, ffit)
                train = Dataset(X, y, tuple(names))
                spec = model.spec
                if model.grid:
                    spec = cross_validate(train, model.grid, model.cv_folds).best
                fitted = fit(spec, train)
                steps_since_fit = 0
            elif fitted is None:
                continue
            row = build_forecast_input(panel, fspec, origin, ffit)
            pred = float(fitted.predict(row)[0])
            steps_since_fit += 1
            try:
                actual = float(panel.target[panel.row_of(q)])
                if not np.isfinite(actual):
                    actual = None
            except KeyError:
                actual = None
            records.append(
                ForecastRecord(model.model_id, origin, q, h, pred, actual)
            )
    return records


def _record_sort_key(r: ForecastRecord):
    return (r.model_id, r.target_date.index, r.horizon)


def run_backtest(
    panel: Panel,
    plan: BacktestPlan,
    models: Sequence[BacktestModel],
    workers: int = 1,
) -> list[ForecastRecord]:
    """Expanding-window out-of-sample forecasts for every (model, quarter).

    Models are independent tasks; output is sorted deterministically and
    does not depend on ``workers``.
    """
    ids = [m.model_id for m in models]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate model ids: {ids}")
    if workers <= 1 or len(models) <= 1:
        chunks = [_run_one_model(panel, plan, m) for m in models]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one_model, panel, plan, m) for m in models]
            chunks = [f.result() for f in futures]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=_record_sort_key)
    return records


def _format_value(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def records_to_csv_text(records: Sequence[ForecastRecord]) -> str:
    lines = ["model_id,origin,target,horizon,prediction,actual"]
    for r in records:
        lines.append(
            f"{r.model_id},{r.origin},{r.target_date},{r.horizon},"
            f"{_format_value(r.prediction)},{_format_value(r.actual)}"
        )
    return "\n".join(lines) + "\n"


def records_from_csv_text(text: str) -> list[ForecastRecord]:
    lines = text.strip().split("\n")
    if lines[0] != "model_id,origin,target,horizon,prediction,actual":
        raise ValueError(f"unexpected forecasts.csv header: {lines[0]!r}")
    out = []
    for line in lines[1:]:
        model_id, origin, target, horizon, pred, actual = line.split(",")
        out.append(
            ForecastRecord(
                model_id,
                QuarterDate.parse(origin),
                QuarterDate.parse(target),
                int(horizon),
                float(pred),
                float(actual) if actual else None,
            )
        )
    return out


def persist_run(
    records: Sequence[ForecastRecord],
    manifest: Mapping[str, object],
    out_dir: str | Path,
    transform_log=None,
) -> Path:
    """Write forecasts.csv + manifest.json (+ transform_log.jsonl) atomically."""
    out_dir = Path(out_dir)
    if out_dir.exists():
        raise FileExistsError(f"run directory {out_dir} already exists")
    csv_text = records_to_csv_text(sorted(records, key=_record_sort_key))
    digest = hashlib.sha256(csv_text.encode("utf-8")).hexdigest()
    doc = {
        **dict(manifest),
        "forecasts_sha256": digest,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "created_by": getpass.getuser(),
    }
    tmp = Path(tempfile.mkdtemp(prefix=out_dir.name + ".tmp", dir=out_dir.parent))
    try:
        (tmp / "forecasts.csv").write_text(csv_text, encoding="utf-8")
        (tmp / "manifest.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        if transform_log is not None:
            transform_log.write_jsonl(tmp / "transform_log.jsonl")
        os.replace(tmp, out_dir)
    except BaseException:
        for p in tmp.glob("*"):
            p.unlink()
        tmp.rmdir()
        raise
    return out_dir


def load_run(path: str | Path) -> tuple[list[ForecastRecord], dict]:
    """Read a run directory back; verifies the forecasts hash."""
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    csv_text = (path / "forecasts.csv").read_text(encoding="utf-8")
    digest = hashlib.sha256(csv_text.encode("utf-8")).hexdigest()
    if digest != manifest.get("forecasts_sha256"):
        raise IntegrityError(
            f"forecasts.csv hash {digest} does not match manifest in {path}"
        )
    return records_from_csv_text(csv_text), manifest


def model_signature(model: TrainedModel) -> str:
    return model_hash(model)


class FactorLagPredictor:
    """A factor-augmented model viewed as a function of raw indicator lags.

    Attribution on this wrapper lands on the original variables instead of
    the latent factors: the input layout is the raw_indicators layout with
    p_x = p_f (y lags first, then ``{var}_lag{j}`` var-major), and factor
    scores are recomputed from the raw values on every call.
    """

    def __init__(self, model: TrainedModel, factor_fit: FactorFit, features: FeatureSpec):
        if features.mode != "factor_augmented":
            raise ValueError("FactorLagPredictor wraps factor_augmented models only")
        self.model = model
        self.factor_fit = factor_fit
        self.features = features
        names = [f"y_lag{j}" for j in range(1, features.p_y + 1)]
        for var in factor_fit.columns:
            for j in range(features.p_f + 1):
                names.append(f"{var}_lag{j}")
        self.feature_names = tuple(names)

    @property
    def raw_spec(self) -> FeatureSpec:
        return FeatureSpec(
            p_y=self.features.p_y,
            p_x=self.features.p_f,
            p_f=self.features.p_f,
            horizon=self.features.horizon,
            mode="raw_indicators",
        )

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        p_y, p_f = self.features.p_y, self.features.p_f
        r = self.factor_fit.rank
        n_vars = len(self.factor_fit.columns)
        Z = np.empty((X.shape[0], p_y + r * (p_f + 1)))
        Z[:, :p_y] = X[:, :p_y]
        for j in range(p_f + 1):
            cols = [p_y + k * (p_f + 1) + j for k in range(n_vars)]
            scores = transform(self.factor_fit, X[:, cols], self.factor_fit.columns)
            for k in range(r):
                Z[:, p_y + k * (p_f + 1) + j] = scores[:, k]
        return self.model.predict(Z)


def default_feature_spec(mode: str, horizon: int = 1) -> FeatureSpec:
    if mode == "target_only":
        return FeatureSpec(p_y=4, p_x=0, p_f=0, horizon=horizon, mode=mode)
    return FeatureSpec(p_y=4, p_x=1, p_f=1, horizon=horizon, mode=mode)


def with_horizon(spec: FeatureSpec, horizon: int) -> FeatureSpec:
    return replace(spec, horizon=horizon)
