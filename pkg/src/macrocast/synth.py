"""Factor-driven synthetic panels (a desk-scale stand-in for real data).

DGP: r latent AR(1) factors drive n_vars indicators through Gaussian
loadings plus idiosyncratic noise; the target follows its own lag plus a
lag polynomial of the factors plus Gaussian noise:

    F_{k,t} = rho * F_{k,t-1} + u_{k,t},      u ~ N(0, 1)
    X_t     = Lambda F_t + eta_t,             eta ~ N(0, idio_noise^2)
    y_t     = c + a * y_{t-1} + b' F_{t-1} + eps_t,  eps ~ N(0, target_noise^2)

With monthly=True the factors (and indicators) are generated at monthly
frequency and the target responds to the quarterly mean of the factors, so
the monthly alignment path is exercised end to end.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import RawSeries
from .dates import MonthDate, QuarterDate
from .rng import derive_rng

__all__ = ["SynthSpec", "SynthResult", "generate_panel_series", "write_series_csv"]

_BURN = 24


@dataclass(frozen=True)
class SynthSpec:
    n_vars: int = 20
    n_quarters: int = 128
    rank: int = 2
    start: QuarterDate = QuarterDate(1992, 1)
    factor_rho: float = 0.75
    loading_scale: float = 1.0
    idio_noise: float = 0.35
    target_ar: float = 0.35
    target_factor_scale: float = 1.0
    target_noise: float = 0.4
    target_mean: float = 6.0
    monthly: bool = False
    target_id: str = "GDP"

    def __post_init__(self) -> None:
        if self.n_vars < 1 or self.n_quarters < 8 or self.rank < 1:
            raise ValueError("need n_vars >= 1, n_quarters >= 8, rank >= 1")
        if not 0 <= self.factor_rho < 1:
            raise ValueError("factor_rho must be in [0, 1)")
        if self.idio_noise < 0 or self.target_noise < 0:
            raise ValueError("noise scales must be >= 0")


@dataclass(frozen=True)
class SynthResult:
    series: tuple[RawSeries, ...]
    truth: dict  # ground-truth sidecar: factors, loadings, coefficients


def generate_panel_series(spec: SynthSpec, seed: int) -> SynthResult:
    rng = derive_rng(seed, "synth")
    T = spec.n_quarters
    r = spec.rank
    steps_per_q = 3 if spec.monthly else 1
    n_steps = (T + _BURN) * steps_per_q
    rho = spec.factor_rho ** (1.0 / steps_per_q)

    F = np.zeros((n_steps, r))
    innov = rng.normal(size=(n_steps, r))
    for t in range(1, n_steps):
        F[t] = rho * F[t - 1] + innov[t]
    F = F[_BURN * steps_per_q :]

    # loadings keep a magnitude floor so every indicator is informative and
    # a rank-r fit reliably captures most of the standardized variance
    raw = rng.normal(scale=spec.loading_scale, size=(spec.n_vars, r))
    loadings = np.sign(raw) * (0.6 * spec.loading_scale + np.abs(raw))
    X = F @ loadings.T + rng.normal(scale=spec.idio_noise, size=(len(F), spec.n_vars))

    # quarterly factor means drive the target
    Fq = F.reshape(T, steps_per_q, r).mean(axis=1)
    signs = np.where(rng.random(r) < 0.5, -1.0, 1.0)
    b = spec.target_factor_scale * (0.6 + 0.4 * rng.random(r)) * signs
    c = spec.target_mean * (1.0 - spec.target_ar)
    y = np.empty(T)
    y[0] = spec.target_mean + rng.normal(scale=spec.target_noise)
    eps = rng.normal(scale=spec.target_noise, size=T)
    for t in range(1, T):
        y[t] = c + spec.target_ar * y[t - 1] + float(Fq[t - 1] @ b) + eps[t]

    quarters = [spec.start.advance(k) for k in range(T)]
    series: list[RawSeries] = [
        RawSeries(
            id=spec.target_id,
            frequency="quarterly",
            kind="yoy_percent",
            observations=tuple((q, float(v)) for q, v in zip(quarters, y)),
        )
    ]
    if spec.monthly:
        first_month = MonthDate(spec.start.year, (spec.start.quarter - 1) * 3 + 1)
        months = [first_month.advance(k) for k in range(T * 3)]
        for j in range(spec.n_vars):
            series.append(
                RawSeries(
                    id=f"IND{j + 1:02d}",
                    frequency="monthly",
                    kind="yoy_percent",
                    observations=tuple((m, float(v)) for m, v in zip(months, X[:, j])),
                )
            )
    else:
        for j in range(spec.n_vars):
            series.append(
                RawSeries(
                    id=f"IND{j + 1:02d}",
                    frequency="quarterly",
                    kind="yoy_percent",
                    observations=tuple((q, float(v)) for q, v in zip(quarters, X[:, j])),
                )
            )

    truth = {
        "seed": seed,
        "spec": {**asdict(spec), "start": str(spec.start)},
        "factor_coefficients": b.tolist(),
        "target_intercept": c,
        "loadings": loadings.tolist(),
        "quarterly_factors": Fq.tolist(),
        "target": y.tolist(),
    }
    return SynthResult(series=tuple(series), truth=truth)


def write_series_csv(series, path: str | Path) -> None:
    """Emit the data-module ingestion schema."""
    lines = ["date,variable,value,frequency,kind"]
    for s in series:
        for date, value in s.observations:
            if value is None:
                continue
            lines.append(f"{date},{s.id},{value!r},{s.frequency},{s.kind}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_truth_json(truth: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
