"""Deterministic report assembly: report.json, CSV tables, SVG plots.

All artifacts are pure functions of the experiment output: JSON is
serialized with sorted keys, CSV rows follow a fixed ordering, and the
plots are emitted as hand-built SVG so identical runs produce identical
bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .harness import (STAR_SETTINGS, acr_stratified_report, aggregate)

METRIC_NAMES = ("auc", "gmean", "mcc")


def _fold_metric(fr: dict, setting: str, name: str):
    return fr["settings"][setting]["metrics"][name]


def _star_fold_means(fold_results, star: str, n: str) -> dict:
    """Per-fold value for a starred setting at noise level n: the mean
    over repetitions (undefined reps excluded), across all metrics."""
    out = {name: [] for name in METRIC_NAMES}
    for fr in fold_results:
        reps = fr["robustness"][star][n]
        for name in METRIC_NAMES:
            vals = [r["metrics"][name] for r in reps if r["metrics"][name] is not None]
            out[name].append(float(np.mean(vals)) if vals else None)
    return out


def build_report(run_output: dict, config_echo: dict, records: dict) -> dict:
    """Assemble the top-level report dictionary from Experiment.run output."""
    splits = run_output["splits"]
    fold_results = run_output["folds"]

    settings_block = {}
    setting_names = sorted(fold_results[0]["settings"]) if fold_results else []
    for setting in setting_names:
        per_fold = [{"fold": fr["fold"],
                     "metrics": fr["settings"][setting]["metrics"],
                     "records": fr["settings"][setting]["records"]}
                    for fr in fold_results]
        agg = {name: aggregate([_fold_metric(fr, setting, name)
                                for fr in fold_results])
               for name in METRIC_NAMES}
        settings_block[setting] = {"per_fold": per_fold, "aggregate": agg}

    robustness_block = {}
    if fold_results and fold_results[0]["robustness"]:
        for star in STAR_SETTINGS:
            levels = {}
            for n in fold_results[0]["robustness"][star]:
                fold_means = _star_fold_means(fold_results, star, n)
                levels[n] = {
                    "per_fold": [{"fold": fr["fold"],
                                  "reps": fr["robustness"][star][n]}
                                 for fr in fold_results],
                    "aggregate": {name: aggregate(fold_means[name])
                                  for name in METRIC_NAMES},
                }
            robustness_block[star] = levels

    return {
        "config": config_echo,
        "folds": [{
            "fold": fr["fold"],
            "train": len(split.train),
            "val": len(split.val),
            "test": len(split.test),
            "weights": fr["weights"],
            "weights_floored": fr["weights_floored"],
        } for split, fr in zip(splits, fold_results)],
        "settings": settings_block,
        "robustness": robustness_block,
        "acr": acr_stratified_report(fold_results, splits, records,
                                     settings=[s for s in ("F", "FplusC", "FplusChat")
                                               if s in setting_names]),
    }


def report_json_bytes(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=1,
                       allow_nan=False) + "\n").encode()


def _cell(agg: dict, scale: float) -> str:
    if agg["mean"] is None:
        return "undefined"
    return f"{agg['mean'] * scale:.2f} +/- {agg['se'] * scale:.2f}"


_SCALES = {"auc": 100.0, "gmean": 100.0, "mcc": 100.0}  # MCC spans [-100, 100]


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_tables(out_dir: Path, report: dict) -> None:
    tables = out_dir / "tables"
    tables.mkdir(parents=True, exist_ok=True)

    rows = []
    for setting in sorted(report["settings"]):
        agg = report["settings"][setting]["aggregate"]
        rows.append([setting] + [_cell(agg[name], _SCALES[name])
                                 for name in METRIC_NAMES])
    _write_csv(tables / "settings.csv",
               ["setting", "auc", "gmean", "mcc"], rows)

    if report["robustness"]:
        rows = []
        for star in STAR_SETTINGS:
            for n in sorted(report["robustness"][star], key=int):
                agg = report["robustness"][star][n]["aggregate"]
                rows.append([star, n] + [_cell(agg[name], _SCALES[name])
                                         for name in METRIC_NAMES])
        _write_csv(tables / "robustness.csv",
                   ["setting", "synthetic_percent", "auc", "gmean", "mcc"], rows)

    rows = []
    for cat in sorted(report["acr"]):
        for setting in sorted(report["acr"][cat]):
            block = report["acr"][cat][setting]
            if block.get("empty"):
                rows.append([cat, setting, "empty", "empty", "empty"])
                continue
            rows.append([cat, setting] + [_cell(block[name], _SCALES[name])
                                          for name in METRIC_NAMES])
    _write_csv(tables / "acr.csv",
               ["acr", "setting", "auc", "gmean", "mcc"], rows)


_PLOT_W, _PLOT_H = 640, 420
_MARGIN = 56
_COLORS = {"F": "#1f77b4", "Cstar": "#d62728", "FplusCstar": "#2ca02c"}


def _svg_line(points, color: str) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
            'stroke-width="2"/>')


def _svg_dots(points, color: str) -> str:
    return "".join(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>'
                   for x, y in points)


def robustness_svg(report: dict, metric: str) -> str:
    """Metric-vs-synthetic-percent curves: one series each for F (flat
    baseline), Cstar, and FplusCstar, one point per noise level."""
    levels = sorted(report["robustness"]["Cstar"], key=int)
    xs = [int(n) for n in levels]
    lo, hi = (min(xs), max(xs)) if xs else (0, 100)
    span_x = max(hi - lo, 1)

    series = {}
    f_agg = report["settings"].get("F", {}).get("aggregate", {}).get(metric)
    if f_agg is not None and f_agg["mean"] is not None:
        series["F"] = [(n, f_agg["mean"]) for n in xs]
    for star in STAR_SETTINGS:
        pts = []
        for n in levels:
            agg = report["robustness"][star][n]["aggregate"][metric]
            if agg["mean"] is not None:
                pts.append((int(n), agg["mean"]))
        series[star] = pts

    all_y = [y for pts in series.values() for _, y in pts]
    y_lo = min(all_y + [0.0]) if all_y else 0.0
    y_hi = max(all_y + [1.0]) if all_y else 1.0
    span_y = max(y_hi - y_lo, 1e-9)

    def to_xy(n, y):
        px = _MARGIN + (n - lo) / span_x * (_PLOT_W - 2 * _MARGIN)
        py = _PLOT_H - _MARGIN - (y - y_lo) / span_y * (_PLOT_H - 2 * _MARGIN)
        return px, py

    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_PLOT_W}" '
        f'height="{_PLOT_H}" viewBox="0 0 {_PLOT_W} {_PLOT_H}">',
        f'<rect width="{_PLOT_W}" height="{_PLOT_H}" fill="white"/>',
        f'<line x1="{_MARGIN}" y1="{_PLOT_H - _MARGIN}" x2="{_PLOT_W - _MARGIN}" '
        f'y2="{_PLOT_H - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" '
        f'y2="{_PLOT_H - _MARGIN}" stroke="black"/>',
        f'<text x="{_PLOT_W / 2:.0f}" y="{_PLOT_H - 12}" text-anchor="middle" '
        f'font-size="13">synthetic CESM patients (%)</text>',
        f'<text x="16" y="{_PLOT_H / 2:.0f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {_PLOT_H / 2:.0f})">{metric}</text>',
    ]
    for n in xs:
        px, _ = to_xy(n, y_lo)
        body.append(f'<text x="{px:.2f}" y="{_PLOT_H - _MARGIN + 16}" '
                    f'text-anchor="middle" font-size="11">{n}</text>')
    for i, (name, pts) in enumerate(sorted(series.items())):
        color = _COLORS[name]
        xy = [to_xy(n, y) for n, y in pts]
        if len(xy) > 1:
            body.append(_svg_line(xy, color))
        body.append(_svg_dots(xy, color))
        ly = _MARGIN + 16 * i
        body.append(f'<rect x="{_PLOT_W - _MARGIN - 110}" y="{ly - 9}" '
                    f'width="10" height="10" fill="{color}"/>')
        body.append(f'<text x="{_PLOT_W - _MARGIN - 95}" y="{ly}" '
                    f'font-size="12">{name}</text>')
    body.append("</svg>")
    return "\n".join(body) + "\n"


def write_plots(out_dir: Path, report: dict) -> None:
    if not report["robustness"]:
        return
    plots = out_dir / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    for metric in METRIC_NAMES:
        (plots / f"robustness_{metric}.svg").write_text(
            robustness_svg(report, metric))


def write_report(out_dir, report: dict) -> Path:
    """Write report.json plus tables/ and plots/ under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "report.json"
    path.write_bytes(report_json_bytes(report))
    write_tables(out_dir, report)
    write_plots(out_dir, report)
    return path
