"""Report generation: per-run summary CSV, acceleration-ratio table, and an
SVG of mean learning curves with min-max bands across seeds."""

from __future__ import annotations

import csv
import os
from collections import defaultdict

import numpy as np

from . import metrics
from .dqn import load_curve_outcomes
from .harness import collect_metrics

PERCENTS = (50, 60, 70, 80, 90)

_COLORS = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"]


def emit_report(out_root: str, report_dir: str | None = None) -> dict:
    """Writes summary.csv, table_accel.csv, curves.svg next to the runs."""
    report_dir = report_dir or out_root
    rows = collect_metrics(out_root)
    if not rows:
        raise FileNotFoundError(f"no completed runs with metrics.json under {out_root}")
    os.makedirs(report_dir, exist_ok=True)
    paths = {
        "summary": os.path.join(report_dir, "summary.csv"),
        "accel": os.path.join(report_dir, "table_accel.csv"),
        "curves": os.path.join(report_dir, "curves.svg"),
    }
    _write_summary(rows, paths["summary"])
    _write_accel_table(rows, paths["accel"])
    _write_curves_svg(out_root, rows, paths["curves"])
    return paths


def _write_summary(rows: list[dict], path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["variant", "objects", "seed", "G_final", "G_bar", "converged"]
                        + [f"Cs{p}" for p in PERCENTS])
        for m in sorted(rows, key=lambda r: (r["variant"], r["objects"], r["seed"])):
            writer.writerow([m["variant"], m["objects"], m["seed"],
                             f"{m['G_final']:.10g}", f"{m['G_bar']:.10g}", m["converged"]]
                            + [m["Cs"].get(str(p), "") for p in PERCENTS])


def _median_cs(rows: list[dict], variant: str, objects: int, p: int) -> float | None:
    vals = [m["Cs"].get(str(p)) for m in rows
            if m["variant"] == variant and m["objects"] == objects]
    vals = [v for v in vals if v is not None]
    return float(np.median(vals)) if vals else None


def _write_accel_table(rows: list[dict], path: str) -> None:
    """One acceleration ratio per (objects, p), scratch vs warm medians.
    Needs both variants; otherwise the table holds only a header."""
    variants = {m["variant"] for m in rows}
    objects = sorted({m["objects"] for m in rows})
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["objects"] + [f"Cs{p}" for p in PERCENTS])
        if not {"scratch", "warm"} <= variants:
            return
        for n in objects:
            cells = []
            for p in PERCENTS:
                r = _median_cs(rows, "scratch", n, p)
                rp = _median_cs(rows, "warm", n, p)
                if r is None or rp is None or rp <= 0:
                    cells.append("")
                else:
                    cells.append(f"{metrics.acceleration_ratio(r, rp):.4g}")
            writer.writerow([n] + cells)


def _curve_points(out_root: str, rows: list[dict]) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Per variant: (mean, min, max) of windowed rates across seeds/objects."""
    grouped: dict[str, list[np.ndarray]] = defaultdict(list)
    for m in rows:
        run_dir = os.path.join(out_root, f"{m['variant']}_obj{m['objects']}_seed{m['seed']}")
        outcomes = load_curve_outcomes(run_dir)
        grouped[m["variant"]].append(metrics.window_rates(outcomes, m["window"]))
    out = {}
    for variant, curves in grouped.items():
        n = min(len(c) for c in curves)
        stack = np.stack([c[:n] for c in curves])
        out[variant] = (stack.mean(axis=0), stack.min(axis=0), stack.max(axis=0))
    return out


def _write_curves_svg(out_root: str, rows: list[dict], path: str,
                      width: int = 640, height: int = 400) -> None:
    curves = _curve_points(out_root, rows)
    ml, mr, mt, mb = 50, 20, 20, 40
    pw, ph = width - ml - mr, height - mt - mb
    n_max = max(len(c[0]) for c in curves.values())

    def sx(i):  # window index -> x
        return ml + pw * (i / max(n_max - 1, 1))

    def sy(v):  # rate in [0, 1] -> y
        return mt + ph * (1.0 - v)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
             f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>']
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(tick)
        parts.append(f'<line x1="{ml - 4}" y1="{y:.1f}" x2="{ml}" y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{ml - 8}" y="{y + 4:.1f}" text-anchor="end" '
                     f'font-size="11">{tick:g}</text>')
    parts.append(f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle" '
                 f'font-size="12">window index</text>')
    for ci, (variant, (mean, lo, hi)) in enumerate(sorted(curves.items())):
        color = _COLORS[ci % len(_COLORS)]
        n = len(mean)
        band = " ".join(f"{sx(i):.1f},{sy(hi[i]):.1f}" for i in range(n))
        band += " " + " ".join(f"{sx(i):.1f},{sy(lo[i]):.1f}" for i in reversed(range(n)))
        parts.append(f'<polygon points="{band}" fill="{color}" opacity="0.15"/>')
        line = " ".join(f"{sx(i):.1f},{sy(mean[i]):.1f}" for i in range(n))
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw - 6}" y="{mt + 16 + 16 * ci}" text-anchor="end" '
                     f'font-size="12" fill="{color}">{variant}</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")
