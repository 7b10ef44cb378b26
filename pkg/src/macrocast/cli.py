"""Batch CLI: synth, ingest, backtest, evaluate, compare, explain, report.

Exit codes: 0 success, 2 validation error (bad config/paths/flags),
1 runtime failure. All outputs are deterministic given identical inputs,
seed, and config (timestamps live only in manifest.json).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation, explain as explain_mod
from .config import ConfigError, RunConfig, load_config, parse_config
from .data import Panel, TransformLog, assemble_panel, impute, parse_csv, to_yoy
from .dates import QuarterDate
from .ensemble import combine_static, weighted_forecast
from .evaluation import PanelCell, compute_metrics, inclusive_test, panel_fe_regression
from .pipeline import (
    BacktestModel,
    FactorLagPredictor,
    ForecastRecord,
    _assemble_rows,
    _feature_sources,
    _fit_factors_at,
    build_forecast_input,
    load_run,
    model_signature,
    persist_run,
    run_backtest,
)
from .learners import Dataset, cross_validate, fit
from .report import render_report
from .rng import derive_rng, stable_int
from .synth import SynthSpec, generate_panel_series, write_series_csv, write_truth_json

logger = logging.getLogger("macrocast")


def _fail_validation(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 2


def build_panel_from_config(cfg: RunConfig) -> tuple[Panel, TransformLog]:
    """Shared ingestion path: parse, YoY-convert levels, impute, align."""
    log = TransformLog()
    series = parse_csv(cfg.data_path)
    processed = []
    target_span = None
    for s in series:
        if s.kind == "level":
            s = to_yoy(s, log)
        if cfg.impute_method != "none" and s.id != cfg.target_id:
            s = impute(s, cfg.impute_method, log)
        if s.id == cfg.target_id:
            target_span = (s.observations[0][0], s.observations[-1][0])
        processed.append(s)
    if target_span is None:
        raise ConfigError(f"target_id: series {cfg.target_id!r} not present in {cfg.data_path}")
    window = cfg.window or target_span
    panel = assemble_panel(processed, cfg.target_id, window, log)
    return panel, log


def _records_with_ensembles(cfg: RunConfig, records: list[ForecastRecord]) -> list[ForecastRecord]:
    out = list(records)
    for spec in cfg.ensemble_specs():
        if spec.kind in ("mean", "median"):
            out.extend(combine_static(records, spec.member_ids, spec.kind, spec.ensemble_id))
        else:
            out.extend(weighted_forecast(records, spec))
    out.sort(key=lambda r: (r.model_id, r.target_date.index, r.horizon))
    return out


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_vars=args.n_vars,
        n_quarters=args.quarters,
        rank=args.rank,
        start=QuarterDate.parse(args.start),
        idio_noise=args.idio_noise,
        target_noise=args.target_noise,
        monthly=args.monthly,
    )
    result = generate_panel_series(spec, args.seed)
    write_series_csv(result.series, args.out)
    if args.truth_out:
        write_truth_json(result.truth, args.truth_out)
    print(f"wrote {args.out} ({spec.n_vars} indicators, {spec.n_quarters} quarters)")
    return 0


def cmd_ingest(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = TransformLog()
    series = parse_csv(args.csv)
    processed = []
    for s in series:
        if s.kind == "level":
            s = to_yoy(s, log)
        if args.impute != "none":
            s = impute(s, args.impute, log)
        processed.append(s)
    lines = ["date,variable,value,frequency,kind"]
    for s in processed:
        for date, value in s.observations:
            if value is None:
                continue
            lines.append(f"{date},{s.id},{value!r},{s.frequency},{s.kind}")
    (out_dir / "panel.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    log.write_jsonl(out_dir / "transform_log.jsonl")
    print(f"wrote {out_dir / 'panel.csv'} and transform_log.jsonl")
    return 0


def cmd_backtest(args) -> int:
    cfg = load_config(args.config)
    panel, log = build_panel_from_config(cfg)
    models = cfg.backtest_models()
    records = run_backtest(panel, cfg.plan, models, workers=args.workers)
    records = _records_with_ensembles(cfg, records)

    hashes = {}
    for bm in models:
        hashes[bm.model_id] = _final_model_hash(panel, cfg, bm)
    manifest = {
        # embed the config with the data path resolved, so evaluate/explain
        # work on the run directory from any cwd
        "config": {**cfg.doc, "data": str(cfg.data_path.resolve())},
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "model_hashes": hashes,
    }
    persist_run(records, manifest, args.out, transform_log=log)
    print(f"wrote run directory {args.out} ({len(records)} forecasts)")
    return 0


def _final_model_hash(panel: Panel, cfg: RunConfig, bm: BacktestModel) -> str:
    """Hash of the model refit at the last forecastable origin."""
    last_seg = cfg.plan.segments[-1]
    train_start = (
        cfg.plan.segments[0].train_start if cfg.plan.continuous_expanding else last_seg.train_start
    )
    origin = min(last_seg.forecast_end.advance(-bm.features.horizon), panel.index[-1])
    ffit = None
    if bm.features.mode == "factor_augmented":
        ffit = _fit_factors_at(panel, train_start, origin, bm.rank_rule)
    origins, X, y = _assemble_rows(panel, bm.features, ffit, train_start, origin)
    if len(origins) < cfg.plan.min_train_rows:
        return "unfit"
    names, _, _ = _feature_sources(panel, bm.features, ffit)
    train = Dataset(X, y, tuple(names))
    spec = bm.spec if not bm.grid else cross_validate(train, bm.grid, bm.cv_folds).best
    return model_signature(fit(spec, train))


def _metric_csv_value(x) -> str:
    return "" if x is None else repr(float(x))


def cmd_evaluate(args) -> int:
    records, manifest = load_run(args.run)
    cfg = parse_config(manifest["config"], base_dir=Path(args.run))
    periods = list(cfg.periods)
    if args.slices:
        wanted = set(args.slices)
        known = {p.label for p in evaluation.PERIOD_PRESETS} | {p.label for p in periods}
        unknown = wanted - known
        if unknown:
            raise ConfigError(f"unknown evaluation slice(s): {sorted(unknown)}")
        periods = [p for p in evaluation.PERIOD_PRESETS if p.label in wanted] + [
            p for p in periods if p.label in wanted and p.label not in {x.label for x in evaluation.PERIOD_PRESETS}
        ]
    report = compute_metrics(records, periods or None)
    full = compute_metrics(records, None)
    rows = list(full.rows) + list(report.rows if periods else [])

    out = Path(args.run) / "metrics.csv"
    lines = ["model_id,period,rmse,mae,n_obs"]
    for r in rows:
        lines.append(
            f"{r.model_id},{r.period},{_metric_csv_value(r.rmse)},{_metric_csv_value(r.mae)},{r.n_obs}"
        )
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")

    tests_lines = ["test,metric,model_id,estimate,std_error,t_stat,p_value"]
    baseline = "AR"
    model_ids = sorted({r.model_id for r in records})
    if baseline in model_ids and len(model_ids) > 1:
        for metric in ("SE", "AE"):
            cells = []
            for r in records:
                if r.actual is None:
                    continue
                e = r.actual - r.prediction
                value = e * e if metric == "SE" else abs(e)
                cells.append(PanelCell(r.model_id, r.target_date, r.horizon, value))
            result = panel_fe_regression(cells, baseline=baseline)
            for j, name in enumerate(result.names):
                tests_lines.append(
                    f"fixed_effect_vs_{baseline},{metric},{name},"
                    f"{float(result.coefficients[j])!r},{float(result.std_errors[j])!r},"
                    f"{float(result.t_stats[j])!r},{float(result.p_values[j])!r}"
                )
    (Path(args.run) / "tests.csv").write_text("\n".join(tests_lines) + "\n", encoding="utf-8")
    print(f"wrote {out} and tests.csv ({len(rows)} metric rows)")
    return 0


def cmd_compare(args) -> int:
    records, _ = load_run(args.run)
    external = evaluation.read_external_csv(args.external)
    model_ids = args.models or sorted({r.model_id for r in records})
    report = evaluation.compare_external(records, external, external_id=args.name, models=model_ids)
    out = Path(args.run) / "compare.csv"
    lines = ["model_id,period,rmse,mae,n_obs"]
    for r in report.rows:
        lines.append(
            f"{r.model_id},{r.period},{_metric_csv_value(r.rmse)},{_metric_csv_value(r.mae)},{r.n_obs}"
        )
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")

    # inclusive test: external errors on (external - model) error gap
    by_model: dict[str, dict] = {m: {} for m in model_ids}
    for r in records:
        if r.model_id in by_model and r.actual is not None:
            by_model[r.model_id][r.target_date] = r
    inc_lines = ["model_id,coefficient,std_error,t_stat,p_value,n_obs"]
    for mid in model_ids:
        recs = by_model[mid]
        common = sorted(set(recs) & set(external), key=lambda q: q.index)
        if len(common) < 5:
            continue
        e_ext = np.array([recs[q].actual - external[q] for q in common])
        e_mod = np.array([recs[q].actual - recs[q].prediction for q in common])
        try:
            res = inclusive_test(e_ext, e_mod)
        except ValueError:
            continue
        inc_lines.append(
            f"{mid},{float(res.coefficients[0])!r},{float(res.std_errors[0])!r},"
            f"{float(res.t_stats[0])!r},{float(res.p_values[0])!r},{len(common)}"
        )
    (Path(args.run) / "inclusive.csv").write_text("\n".join(inc_lines) + "\n", encoding="utf-8")
    print(f"wrote {out} and inclusive.csv")
    return 0


def _explain_one_origin(panel, cfg, bm, origin):
    """Refit at an origin exactly as the backtest does, then attribute."""
    plan = cfg.plan
    seg = None
    q = origin.advance(bm.features.horizon)
    for s in plan.segments:
        if not (q < s.forecast_start or s.forecast_end < q):
            seg = s
            break
    if seg is None:
        raise ConfigError(f"target {q} is outside every plan segment")
    train_start = plan.segments[0].train_start if plan.continuous_expanding else seg.train_start

    ffit = None
    if bm.features.mode == "factor_augmented":
        ffit = _fit_factors_at(panel, train_start, origin, bm.rank_rule)
    origins, X, y = _assemble_rows(panel, bm.features, ffit, train_start, origin.advance(-1))
    if len(origins) < plan.min_train_rows:
        raise ConfigError(f"{bm.model_id}: not enough training rows at {origin}")
    names, _, _ = _feature_sources(panel, bm.features, ffit)
    train = Dataset(X, y, tuple(names))
    spec = bm.spec if not bm.grid else cross_validate(train, bm.grid, bm.cv_folds).best
    model = fit(spec, train)

    if bm.features.mode == "factor_augmented":
        predictor = FactorLagPredictor(model, ffit, bm.features)
        raw_spec = predictor.raw_spec
        _, bg, _ = _assemble_rows(panel, raw_spec, None, train_start, origin.advance(-1))
        instance = build_forecast_input(panel, raw_spec, origin)[0]
        feat_names = predictor.feature_names
        target_fn = predictor
    else:
        predictor = model
        bg = X
        instance = build_forecast_input(panel, bm.features, origin, ffit)[0]
        feat_names = tuple(names)
        target_fn = model

    rows_cap = cfg.explain.background_rows
    if bg.shape[0] > rows_cap:
        keep = derive_rng(cfg.seed, "shap_background", bm.model_id, str(origin)).choice(
            bg.shape[0], size=rows_cap, replace=False
        )
        bg = bg[np.sort(keep)]

    if len(feat_names) <= cfg.explain.max_exact_features:
        return explain_mod.shapley_exact(
            target_fn, instance, bg, feat_names, model_id=bm.model_id,
            target_date=origin.advance(bm.features.horizon),
        )
    return explain_mod.shapley_sampled(
        target_fn, instance, bg,
        n_permutations=cfg.explain.n_permutations,
        seed=stable_int(f"{cfg.seed}:{bm.model_id}:{origin}"),
        feature_names=feat_names, model_id=bm.model_id,
        target_date=origin.advance(bm.features.horizon),
    )


def cmd_explain(args) -> int:
    records, manifest = load_run(args.run)
    cfg = parse_config(manifest["config"], base_dir=Path(args.run))
    if args.model not in cfg.single_ids:
        raise ConfigError(f"--model must be one of the run's single models: {cfg.single_ids}")
    period = None
    for p in list(cfg.periods) + list(evaluation.PERIOD_PRESETS):
        if p.label == args.period:
            period = p
            break
    if period is None:
        raise ConfigError(f"unknown period {args.period!r}")

    panel, _ = build_panel_from_config(cfg)
    bm = next(m for m in cfg.backtest_models() if m.model_id == args.model)
    quarters = [
        r.target_date
        for r in records
        if r.model_id == args.model and r.target_date in period
    ]
    if not quarters:
        raise ConfigError(f"no {args.model} forecasts inside {args.period}")
    if args.max_instances and len(quarters) > args.max_instances:
        quarters = quarters[:: max(1, len(quarters) // args.max_instances)][: args.max_instances]

    atts = []
    for q in quarters:
        atts.append(_explain_one_origin(panel, cfg, bm, q.advance(-bm.features.horizon)))

    run_dir = Path(args.run)
    shap_lines = ["model_id,target_date,variable,phi"]
    for a in atts:
        for name, phi in zip(a.feature_names, a.phi):
            shap_lines.append(f"{a.model_id},{a.target_date},{name},{float(phi)!r}")
    (run_dir / "shapley.csv").write_text("\n".join(shap_lines) + "\n", encoding="utf-8")

    table = explain_mod.aggregate_importance(atts, periods=[period], top_k=5)
    imp_lines = ["model_id,period,variable,value,top5"]
    for row in table.rows:
        imp_lines.append(
            f"{row.model_id},{row.period},{row.variable},{float(row.value)!r},{1 if row.top else 0}"
        )
    (run_dir / "importance.csv").write_text("\n".join(imp_lines) + "\n", encoding="utf-8")

    top_vars = [r.variable for r in table.rows if r.top and r.variable != "y"]
    grouping = explain_mod.default_grouping(atts[0].feature_names)
    for var in sorted(set(top_vars)):
        feats = [n for n in atts[0].feature_names if grouping[n] == var]
        feat = sorted(feats)[0]
        curve = explain_mod.dependence_curve(atts, feat) if len(atts) >= 5 else []
        tc = dict(explain_mod.time_curve(atts, feat))
        by_value = {}
        for a in atts:
            i = a.feature_names.index(feat)
            by_value[a.target_date] = float(a.feature_values[i])
        lines = ["target_date,value,phi,smooth"]
        smooth_of = {round(v, 12): s for v, _p, s in curve}
        for q in sorted(tc, key=lambda d: d.index):
            v = by_value[q]
            s = smooth_of.get(round(v, 12), "")
            s_txt = repr(s) if s != "" else ""
            lines.append(f"{q},{float(v)!r},{float(tc[q])!r},{s_txt}")
        safe = var.replace("/", "_")
        (run_dir / f"dependence_{safe}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote shapley.csv, importance.csv, {len(set(top_vars))} dependence files")
    return 0


def cmd_report(args) -> int:
    text = render_report(args.run)
    out = Path(args.out) if args.out else Path(args.run) / "report.md"
    out.write_text(text, encoding="utf-8")
    print(f"wrote {out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="macrocast",
        description="Quarterly growth forecasting: backtests, ensembles, evaluation, attribution.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="enable info logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic factor-driven panel CSV")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--truth-out", help="optional ground-truth sidecar JSON path")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--n-vars", type=int, default=20, help="number of indicator series")
    p.add_argument("--quarters", type=int, default=128, help="panel length in quarters")
    p.add_argument("--rank", type=int, default=2, help="number of latent factors")
    p.add_argument("--start", default="1992Q1", help="first quarter (YYYYQn)")
    p.add_argument("--idio-noise", type=float, default=0.4, help="indicator noise scale")
    p.add_argument("--target-noise", type=float, default=0.4, help="target noise scale")
    p.add_argument("--monthly", action="store_true", help="emit monthly indicators")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate/transform a raw CSV into a normalized panel")
    p.add_argument("csv", help="input CSV (date,variable,value,frequency,kind)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--impute", default="forward_fill", choices=["forward_fill", "ar_fill", "none"])
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("backtest", help="run the expanding-window backtest from a config")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--workers", type=int, default=1, help="parallel model workers")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("evaluate", help="compute metrics.csv and tests.csv for a run")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--slices", nargs="*", help="period labels (defaults to config periods)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="compare a run against an external forecast CSV")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--external", required=True, help="CSV with target_date,forecast")
    p.add_argument("--name", default="external", help="label for the external source")
    p.add_argument("--models", nargs="*", help="model ids to compare (default: all)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("explain", help="Shapley attribution for one model over a period")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--model", required=True, help="single-model id to explain")
    p.add_argument("--period", required=True, help="period label")
    p.add_argument("--max-instances", type=int, default=0, help="cap explained quarters (0 = all)")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("report", help="render a Markdown report for a run")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--out", help="output path (default: <run>/report.md)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, FileExistsError, KeyError) as exc:
        return _fail_validation(str(exc))
    except ValueError as exc:
        return _fail_validation(str(exc))
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
