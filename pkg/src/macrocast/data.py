"""Mixed-frequency ingestion and alignment into a quarterly design panel.

Input CSV schema: ``date,variable,value,frequency,kind`` with dates written
``YYYYQn`` (quarterly) or ``YYYY-MM`` (monthly). All transforms are pure;
missing cells are explicit (``None`` in series observations, NaN in panels)
and every lossy decision is appended to a :class:`TransformLog`.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dates import MonthDate, QuarterDate, parse_date

__all__ = [
    "RawSeries",
    "Panel",
    "TransformLog",
    "parse_csv",
    "to_yoy",
    "monthly_to_quarterly",
    "impute",
    "assemble_panel",
]

FREQUENCIES = ("monthly", "quarterly")
KINDS = ("level", "yoy_percent", "index")

CSV_COLUMNS = ("date", "variable", "value", "frequency", "kind")


class TransformLog:
    """Append-only log of data-transform events, serializable as JSON lines."""

    def __init__(self) -> None:
        self.events: list[dict] = []

    def add(self, op: str, **fields) -> None:
        self.events.append({"op": op, **fields})

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for ev in self.events:
                fh.write(json.dumps(ev, sort_keys=True) + "\n")


@dataclass(frozen=True)
class RawSeries:
    """One tagged macro time series; ``None`` values mark missing cells."""

    id: str
    frequency: str
    kind: str
    observations: tuple[tuple[QuarterDate | MonthDate, float | None], ...]

    def __post_init__(self) -> None:
        if self.frequency not in FREQUENCIES:
            raise ValueError(f"series {self.id!r}: unknown frequency {self.frequency!r}")
        if self.kind not in KINDS:
            raise ValueError(f"series {self.id!r}: unknown kind {self.kind!r}")
        date_cls = MonthDate if self.frequency == "monthly" else QuarterDate
        prev = None
        for date, value in self.observations:
            if not isinstance(date, date_cls):
                raise ValueError(
                    f"series {self.id!r}: {date} does not match frequency {self.frequency!r}"
                )
            if prev is not None and not prev < date:
                raise ValueError(f"series {self.id!r}: dates not strictly increasing at {date}")
            prev = date
            if value is not None and not np.isfinite(value):
                raise ValueError(f"series {self.id!r}: non-finite value at {date}")

    @property
    def dates(self) -> tuple:
        return tuple(d for d, _ in self.observations)

    def as_dict(self) -> dict:
        return {d: v for d, v in self.observations}

    def observed(self) -> list[tuple[QuarterDate | MonthDate, float]]:
        return [(d, v) for d, v in self.observations if v is not None]

    @property
    def lag_per_year(self) -> int:
        return 12 if self.frequency == "monthly" else 4


@dataclass(frozen=True)
class Panel:
    """Aligned quarterly design panel; ``values[i, j]`` is column j at index[i]."""

    index: tuple[QuarterDate, ...]
    columns: tuple[str, ...]
    values: np.ndarray
    target_id: str
    first_valid: Mapping[str, QuarterDate | None] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.index), len(self.columns)):
            raise ValueError(
                f"panel shape {self.values.shape} != ({len(self.index)}, {len(self.columns)})"
            )
        if self.target_id not in self.columns:
            raise ValueError(f"target column {self.target_id!r} not in panel")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate panel columns")
        self.values.setflags(write=False)

    def col_index(self, column: str) -> int:
        try:
            return self.columns.index(column)
        except ValueError:
            raise KeyError(f"no panel column {column!r}") from None

    def column(self, column: str) -> np.ndarray:
        return self.values[:, self.col_index(column)]

    def row_of(self, date: QuarterDate) -> int:
        pos = date - self.index[0]
        if pos < 0 or pos >= len(self.index) or self.index[pos] != date:
            raise KeyError(f"date {date} not in panel index")
        return pos

    @property
    def target(self) -> np.ndarray:
        return self.column(self.target_id)

    @property
    def indicator_columns(self) -> tuple[str, ...]:
        return tuple(c for c in self.columns if c != self.target_id)


def parse_csv(path: str | Path, schema: Mapping[str, str] | None = None) -> list[RawSeries]:
    """Parse the ingestion CSV into one RawSeries per variable.

    ``schema`` optionally maps the logical column names
    (date/variable/value/frequency/kind) to the file's actual headers.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    colmap = {c: c for c in CSV_COLUMNS}
    if schema:
        colmap.update(schema)

    by_var: dict[str, dict] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [colmap[c] for c in CSV_COLUMNS if colmap[c] not in header]
        if missing:
            raise ValueError(f"CSV {path} missing required columns: {missing}")
        for lineno, row in enumerate(reader, start=2):
            var = row[colmap["variable"]].strip()
            raw_date = row[colmap["date"]]
            try:
                date = parse_date(raw_date)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            try:
                value = float(row[colmap["value"]])
            except ValueError:
                raise ValueError(
                    f"{path}:{lineno}: unparseable value {row[colmap['value']]!r}"
                ) from None
            if not np.isfinite(value):
                raise ValueError(f"{path}:{lineno}: non-finite value for {var!r}")
            frequency = row[colmap["frequency"]].strip()
            kind = row[colmap["kind"]].strip()

            entry = by_var.setdefault(
                var, {"frequency": frequency, "kind": kind, "obs": {}}
            )
            if entry["frequency"] != frequency or entry["kind"] != kind:
                raise ValueError(
                    f"{path}:{lineno}: variable {var!r} changes frequency/kind "
                    f"({entry['frequency']}/{entry['kind']} -> {frequency}/{kind})"
                )
            if date in entry["obs"]:
                raise ValueError(
                    f"{path}:{lineno}: duplicate observation ({var!r}, {date})"
                )
            entry["obs"][date] = value

    series = []
    for var, entry in by_var.items():
        obs = tuple(sorted(entry["obs"].items(), key=lambda dv: dv[0]))
        series.append(
            RawSeries(id=var, frequency=entry["frequency"], kind=entry["kind"], observations=obs)
        )
    return series


def to_yoy(s: RawSeries, log: TransformLog | None = None) -> RawSeries:
    """Convert a level series to year-over-year percent growth.

    value_t = 100 * (x_t / x_{t-lag} - 1) with lag = 4 (quarterly) or 12
    (monthly); the first lag dates are dropped. A zero denominator yields a
    missing marker at t (logged), never an exception.
    """
    if s.kind != "level":
        raise ValueError(f"to_yoy expects a level series, got kind {s.kind!r} for {s.id!r}")
    lag = s.lag_per_year
    if not s.observations:
        raise ValueError(f"to_yoy: series {s.id!r} is empty")
    first, last = s.observations[0][0], s.observations[-1][0]
    if last - first < lag:
        raise ValueError(
            f"to_yoy: series {s.id!r} spans {last - first} periods, needs at least {lag}"
        )
    lookup = s.as_dict()
    out: list[tuple] = []
    for date, value in s.observations:
        if date - first < lag or value is None:
            continue
        base = lookup.get(date.advance(-lag))
        if base is None:
            continue
        if base == 0.0:
            out.append((date, None))
            if log is not None:
                log.add("to_yoy_zero_base", variable=s.id, date=str(date))
            continue
        out.append((date, 100.0 * (value / base - 1.0)))
    return RawSeries(id=s.id, frequency=s.frequency, kind="yoy_percent", observations=tuple(out))


def monthly_to_quarterly(s: RawSeries) -> RawSeries:
    """Collapse a monthly series to quarterly by averaging the months present.

    A quarter with no observed months stays missing (no output row).
    """
    if s.frequency != "monthly":
        raise ValueError(f"monthly_to_quarterly expects a monthly series, got {s.frequency!r}")
    buckets: dict[QuarterDate, list[float]] = {}
    for date, value in s.observations:
        if value is None:
            continue
        buckets.setdefault(date.quarter, []).append(value)
    obs = tuple(
        (q, float(np.mean(vals))) for q, vals in sorted(buckets.items(), key=lambda kv: kv[0])
    )
    return RawSeries(id=s.id, frequency="quarterly", kind=s.kind, observations=obs)


def _grid(s: RawSeries) -> tuple[list, np.ndarray]:
    """Dense date grid from first to last observed date; NaN marks gaps."""
    observed = s.observed()
    first, last = observed[0][0], observed[-1][0]
    dates = [first.advance(k) for k in range(last - first + 1)]
    values = np.full(len(dates), np.nan)
    for date, value in s.observations:
        if value is not None:
            values[date - first] = value
    return dates, values


def _fit_ar_coeffs(values: np.ndarray, max_p: int = 4) -> np.ndarray:
    """AIC-selected AR(p) least-squares fit on the observed cells of a grid.

    Returns [intercept, phi_1..phi_p]. Only uses samples whose full lag
    window is observed.
    """
    n = len(values)
    best: tuple[float, np.ndarray] | None = None
    for p in range(1, max_p + 1):
        rows, targets = [], []
        for t in range(p, n):
            window = values[t - p : t + 1]
            if np.all(np.isfinite(window)):
                rows.append(window[:-1][::-1])  # [y_{t-1}, ..., y_{t-p}]
                targets.append(window[-1])
        if len(targets) < p + 2:
            continue
        design = np.column_stack([np.ones(len(targets)), np.array(rows)])
        y = np.array(targets)
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        rss = float(np.sum((y - design @ coef) ** 2))
        aic = len(y) * np.log(max(rss / len(y), 1e-300)) + 2 * (p + 1)
        if best is None or aic < best[0]:
            best = (aic, coef)
    if best is None:
        raise ValueError("not enough contiguous observations for any AR order")
    return best[1]


def impute(s: RawSeries, method: str, log: TransformLog | None = None) -> RawSeries:
    """Fill interior gaps; observed values pass through untouched.

    ``forward_fill`` copies the last observed value. ``ar_fill`` fits an
    AR(p), p in 1..4 by AIC, and fills gaps left to right with one-step
    predictions; with fewer than 8 observations it falls back to
    forward_fill (logged warning). Leading missing values stay missing.
    """
    if method not in ("forward_fill", "ar_fill"):
        raise ValueError(f"unknown imputation method {method!r}")
    observed = s.observed()
    if not observed:
        raise ValueError(f"impute: series {s.id!r} has no observed values")
    if method == "ar_fill" and len(observed) < 8:
        if log is not None:
            log.add(
                "ar_fill_fallback",
                variable=s.id,
                reason=f"only {len(observed)} observations, need 8",
            )
        method = "forward_fill"

    dates, values = _grid(s)
    gaps = np.where(~np.isfinite(values))[0]
    if gaps.size == 0:
        return RawSeries(s.id, s.frequency, s.kind, tuple(zip(dates, values.tolist())))

    filled = values.copy()
    if method == "forward_fill":
        for t in gaps:
            filled[t] = filled[t - 1]
            if log is not None:
                log.add("forward_fill", variable=s.id, date=str(dates[t]))
    else:
        coef = _fit_ar_coeffs(values)
        p = len(coef) - 1
        for t in gaps:
            if t < p:
                filled[t] = filled[t - 1]  # not enough history for the AR order
            else:
                lags = filled[t - p : t][::-1]
                filled[t] = coef[0] + float(lags @ coef[1:])
            if log is not None:
                log.add("ar_fill", variable=s.id, date=str(dates[t]), order=p)

    return RawSeries(s.id, s.frequency, s.kind, tuple(zip(dates, filled.tolist())))


def assemble_panel(
    series: Sequence[RawSeries],
    target_id: str,
    window: tuple[QuarterDate, QuarterDate],
    log: TransformLog | None = None,
) -> Panel:
    """Align series on a quarterly index over ``window`` (inclusive).

    Monthly series are collapsed via :func:`monthly_to_quarterly`. The
    target must be quarterly and fully observed on the window. Column order
    follows the input order.
    """
    start, end = window
    index = tuple(QuarterDate.range(start, end))
    ids = [s.id for s in series]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate series ids: {ids}")
    if target_id not in ids:
        raise ValueError(f"target series {target_id!r} not supplied")

    quarterly: list[RawSeries] = []
    for s in series:
        if s.frequency == "monthly":
            if s.id == target_id:
                raise ValueError(f"target series {target_id!r} must be quarterly")
            s = monthly_to_quarterly(s)
        quarterly.append(s)

    values = np.full((len(index), len(quarterly)), np.nan)
    first_valid: dict[str, QuarterDate | None] = {}
    for j, s in enumerate(quarterly):
        lookup = s.as_dict()
        col_first = None
        for i, q in enumerate(index):
            v = lookup.get(q)
            if v is not None:
                values[i, j] = v
                if col_first is None:
                    col_first = q
        first_valid[s.id] = col_first
        if log is not None:
            log.add(
                "panel_column",
                variable=s.id,
                first_valid=str(col_first) if col_first else None,
            )

    tcol = values[:, ids.index(target_id)]
    bad = np.where(~np.isfinite(tcol))[0]
    if bad.size:
        raise ValueError(f"target {target_id!r} missing at {index[bad[0]]} inside window")

    return Panel(
        index=index,
        columns=tuple(ids),
        values=values,
        target_id=target_id,
        first_valid=first_valid,
    )
