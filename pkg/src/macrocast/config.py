"""Run configuration: a single JSON document validated against a schema.

Unknown keys are rejected everywhere. Model names follow the roster
grammar (single models plus MEAN_/MEDIAN_ mixes, RECIP{m}, EXP{beta}_{m}).
The environment variable ``MACROCAST_SEED`` overrides the config seed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from pathlib import Path

import jsonschema

from .dates import QuarterDate
from .ensemble import EnsembleSpec
from .evaluation import PERIOD_PRESETS, PeriodSlice
from .factors import RankRule
from .learners import LossKind
from .pipeline import BacktestModel, BacktestPlan, BacktestSegment
from .roster import SINGLE_IDS, build_ensemble, build_single, is_ensemble_id, is_single_id

__all__ = ["RunConfig", "ConfigError", "CONFIG_SCHEMA", "load_config"]


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending field."""


_SEGMENT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["train_start", "forecast_start", "forecast_end"],
    "properties": {
        "train_start": {"type": "string"},
        "forecast_start": {"type": "string"},
        "forecast_end": {"type": "string"},
    },
}

_PERIOD_SCHEMA = {
    "oneOf": [
        {"type": "string"},
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["label", "start", "end"],
            "properties": {
                "label": {"type": "string"},
                "start": {"type": "string"},
                "end": {"type": "string"},
            },
        },
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["data", "target_id", "models", "plan"],
    "properties": {
        "data": {"type": "string"},
        "target_id": {"type": "string"},
        "seed": {"type": "integer"},
        "horizon": {"type": "integer", "minimum": 1},
        "window": {
            "type": "object",
            "additionalProperties": False,
            "required": ["start", "end"],
            "properties": {"start": {"type": "string"}, "end": {"type": "string"}},
        },
        "impute": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"method": {"enum": ["forward_fill", "ar_fill", "none"]}},
        },
        "models": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "overrides": {
            "type": "object",
            "additionalProperties": {"type": "object"},
        },
        "features": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "p_y": {"type": "integer", "minimum": 1},
                "p_x": {"type": "integer", "minimum": 0},
                "p_f": {"type": "integer", "minimum": 0},
            },
        },
        "plan": {
            "type": "object",
            "additionalProperties": False,
            "required": ["segments"],
            "properties": {
                "segments": {"type": "array", "items": _SEGMENT_SCHEMA, "minItems": 1},
                "refit_every": {"type": "integer", "minimum": 1},
                "min_train_rows": {"type": "integer", "minimum": 1},
                "continuous_expanding": {"type": "boolean"},
            },
        },
        "rank_rule": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["fixed", "variance_threshold"]},
                "r": {"type": "integer", "minimum": 1},
                "tau": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "max_rank": {"type": "integer", "minimum": 1},
            },
        },
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"periods": {"type": "array", "items": _PERIOD_SCHEMA}},
        },
        "ensemble_loss": {"enum": ["absolute", "squared"]},
        "explain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "background_rows": {"type": "integer", "minimum": 1},
                "n_permutations": {"type": "integer", "minimum": 64},
                "max_exact_features": {"type": "integer", "minimum": 1, "maximum": 14},
            },
        },
    },
}

_PRESETS_BY_LABEL = {p.label: p for p in PERIOD_PRESETS}


@dataclasses.dataclass(frozen=True)
class ExplainSettings:
    background_rows: int = 128
    n_permutations: int = 4096
    max_exact_features: int = 14


@dataclasses.dataclass(frozen=True)
class RunConfig:
    doc: dict
    data_path: Path
    target_id: str
    seed: int
    horizon: int
    window: tuple[QuarterDate, QuarterDate] | None
    impute_method: str
    model_ids: tuple[str, ...]
    plan: BacktestPlan
    rank_rule: RankRule
    periods: tuple[PeriodSlice, ...]
    ensemble_loss: LossKind
    explain: ExplainSettings
    overrides: dict

    @property
    def single_ids(self) -> tuple[str, ...]:
        return tuple(m for m in self.model_ids if is_single_id(m))

    @property
    def ensemble_ids(self) -> tuple[str, ...]:
        return tuple(m for m in self.model_ids if is_ensemble_id(m))

    def backtest_models(self) -> list[BacktestModel]:
        out = []
        feats = self.doc.get("features", {})
        for mid in self.single_ids:
            bm = build_single(mid, self.seed, self.horizon, self.overrides.get(mid))
            fs = bm.features
            fs = dataclasses.replace(
                fs,
                p_y=feats.get("p_y", fs.p_y),
                p_x=feats.get("p_x", fs.p_x),
                p_f=feats.get("p_f", fs.p_f),
            )
            out.append(dataclasses.replace(bm, features=fs, rank_rule=self.rank_rule))
        return out

    def ensemble_specs(self) -> list[EnsembleSpec]:
        out = []
        available = set(self.single_ids)
        for mid in self.ensemble_ids:
            spec = build_ensemble(mid, self.ensemble_loss)
            missing = [m for m in spec.member_ids if m not in available]
            if missing:
                raise ConfigError(
                    f"models: ensemble {mid!r} needs members {missing} in the single-model roster"
                )
            out.append(spec)
        return out

    def config_hash(self) -> str:
        doc = dict(self.doc)
        doc["seed"] = self.seed  # env override participates in the hash
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _parse_quarter(text: str, field: str) -> QuarterDate:
    try:
        return QuarterDate.parse(text)
    except ValueError as exc:
        raise ConfigError(f"{field}: {exc}") from None


def _parse_periods(items) -> tuple[PeriodSlice, ...]:
    out = []
    for item in items:
        if isinstance(item, str):
            if item not in _PRESETS_BY_LABEL:
                raise ConfigError(
                    f"evaluation.periods: unknown preset {item!r}; "
                    f"presets are {sorted(_PRESETS_BY_LABEL)}"
                )
            out.append(_PRESETS_BY_LABEL[item])
        else:
            out.append(
                PeriodSlice(
                    item["label"],
                    _parse_quarter(item["start"], "evaluation.periods.start"),
                    _parse_quarter(item["end"], "evaluation.periods.end"),
                )
            )
    return tuple(out)


def parse_config(doc: dict, base_dir: Path | None = None) -> RunConfig:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "(top level)"
        raise ConfigError(f"config field {path}: {exc.message}") from None

    for mid in doc["models"]:
        if not (is_single_id(mid) or is_ensemble_id(mid)):
            raise ConfigError(f"models: unknown model name {mid!r}; singles are {SINGLE_IDS}")
    if len(set(doc["models"])) != len(doc["models"]):
        raise ConfigError("models: duplicate model names")

    seed = int(os.environ.get("MACROCAST_SEED", doc.get("seed", 0)))

    segs = tuple(
        BacktestSegment(
            _parse_quarter(s["train_start"], "plan.segments.train_start"),
            _parse_quarter(s["forecast_start"], "plan.segments.forecast_start"),
            _parse_quarter(s["forecast_end"], "plan.segments.forecast_end"),
        )
        for s in doc["plan"]["segments"]
    )
    try:
        plan = BacktestPlan(
            segments=segs,
            refit_every=doc["plan"].get("refit_every", 1),
            min_train_rows=doc["plan"].get("min_train_rows", 12),
            continuous_expanding=doc["plan"].get("continuous_expanding", False),
        )
    except ValueError as exc:
        raise ConfigError(f"plan: {exc}") from None

    rr = doc.get("rank_rule", {"kind": "variance_threshold", "tau": 0.8})
    try:
        if rr.get("kind", "variance_threshold") == "fixed":
            if "r" not in rr:
                raise ConfigError("rank_rule: fixed rule requires r")
            rank_rule = RankRule.fixed(rr["r"])
        else:
            rank_rule = RankRule.variance_threshold(rr.get("tau", 0.8), rr.get("max_rank", 8))
    except ValueError as exc:
        raise ConfigError(f"rank_rule: {exc}") from None

    window = None
    if "window" in doc:
        window = (
            _parse_quarter(doc["window"]["start"], "window.start"),
            _parse_quarter(doc["window"]["end"], "window.end"),
        )

    periods = _parse_periods(doc.get("evaluation", {}).get("periods", []))
    exp = doc.get("explain", {})
    data_path = Path(doc["data"])
    if base_dir is not None and not data_path.is_absolute():
        data_path = base_dir / data_path

    loss_name = doc.get("ensemble_loss", "absolute")
    return RunConfig(
        doc=doc,
        data_path=data_path,
        target_id=doc["target_id"],
        seed=seed,
        horizon=doc.get("horizon", 1),
        window=window,
        impute_method=doc.get("impute", {}).get("method", "forward_fill"),
        model_ids=tuple(doc["models"]),
        plan=plan,
        rank_rule=rank_rule,
        periods=periods,
        ensemble_loss=LossKind.absolute() if loss_name == "absolute" else LossKind.squared(),
        explain=ExplainSettings(
            background_rows=exp.get("background_rows", 128),
            n_permutations=exp.get("n_permutations", 4096),
            max_exact_features=exp.get("max_exact_features", 14),
        ),
        overrides=doc.get("overrides", {}),
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(doc, base_dir=path.parent)
