"""Markdown run reports built from persisted CSV artifacts.

Reports are deterministic: byte-identical for identical run inputs (no
timestamps, stable ordering, fixed float formatting).
"""

from __future__ import annotations

import csv
from pathlib import Path

from .roster import ALL_IDS

__all__ = ["render_report"]


def _fmt(x: str) -> str:
    if x == "":
        return ""
    return f"{float(x):.4f}"


def _model_order_key(model_id: str):
    try:
        return (0, ALL_IDS.index(model_id))
    except ValueError:
        return (1, model_id)


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def render_report(run_dir: str | Path) -> str:
    """Render metrics (and importance, when present) as Markdown."""
    run_dir = Path(run_dir)
    lines: list[str] = ["# Forecast run report", ""]

    metrics_path = run_dir / "metrics.csv"
    if metrics_path.exists():
        rows = _read_csv(metrics_path)
        periods = sorted({r["period"] for r in rows})
        # 'full' first, then chronological label order
        periods.sort(key=lambda p: (p != "full", p))
        for period in periods:
            sub = [r for r in rows if r["period"] == period]
            sub.sort(key=lambda r: _model_order_key(r["model_id"]))
            lines.append(f"## Errors, {period}")
            lines.append("")
            lines.append("| Model | RMSE | MAE | N |")
            lines.append("|---|---|---|---|")
            for r in sub:
                lines.append(
                    f"| {r['model_id']} | {_fmt(r['rmse'])} | {_fmt(r['mae'])} | {r['n_obs']} |"
                )
            lines.append("")
    else:
        lines.append("_No metrics.csv in this run directory._")
        lines.append("")

    importance_path = run_dir / "importance.csv"
    if importance_path.exists():
        rows = _read_csv(importance_path)
        models = sorted({r["model_id"] for r in rows}, key=_model_order_key)
        lines.append("## Variable importance (mean |Shapley|, top five starred)")
        lines.append("")
        for model_id in models:
            sub = [r for r in rows if r["model_id"] == model_id]
            periods = sorted({r["period"] for r in sub})
            for period in periods:
                cells = [r for r in sub if r["period"] == period]
                cells.sort(key=lambda r: (-float(r["value"]), r["variable"]))
                lines.append(f"### {model_id}, {period}")
                lines.append("")
                lines.append("| Variable | Mean abs Shapley | Top 5 |")
                lines.append("|---|---|---|")
                for r in cells:
                    star = "*" if r["top5"] == "1" else ""
                    lines.append(f"| {r['variable']} | {_fmt(r['value'])} | {star} |")
                lines.append("")

    tests_path = run_dir / "tests.csv"
    if tests_path.exists():
        rows = _read_csv(tests_path)
        lines.append("## Model fixed effects vs baseline")
        lines.append("")
        lines.append("| Test | Metric | Model | Estimate | SE | t | p |")
        lines.append("|---|---|---|---|---|---|---|")
        for r in rows:
            lines.append(
                f"| {r['test']} | {r['metric']} | {r['model_id']} | {_fmt(r['estimate'])} "
                f"| {_fmt(r['std_error'])} | {_fmt(r['t_stat'])} | {_fmt(r['p_value'])} |"
            )
        lines.append("")

    return "\n".join(lines) + "\n"
