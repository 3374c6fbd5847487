"""Run artifacts: trajectory CSV, text report, JSON summary, SVG plot."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .integrate import Trajectory


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def csv_header(n: int, d: int) -> list[str]:
    nd = n * d
    return (
        ["t"]
        + [f"x_{i}" for i in range(1, nd + 1)]
        + [f"eta_{i}" for i in range(1, n + 1)]
        + [f"z_{i}" for i in range(1, nd + 1)]
        + [f"xstar_{i}" for i in range(1, d + 1)]
        + [f"err_{i}" for i in range(1, n + 1)]
    )


def write_csv(path, traj: Trajectory, xstar: np.ndarray, errors: np.ndarray) -> None:
    """One row per recorded sample. ``xstar`` is (samples, d), ``errors`` (samples, N)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(traj.n_agents, traj.dim))
        for t, y, xs, e in zip(traj.times, traj.states, xstar, errors):
            w.writerow([fmt(t), *map(fmt, y), *map(fmt, xs), *map(fmt, e)])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_summary(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(_json_safe(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_report(path, lines: Iterable[str]) -> None:
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- SVG ------------------------------------------------------------------------------

_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


def _decimate(t: np.ndarray, y: np.ndarray, max_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Keep the min and max of each bucket so probing envelopes survive thinning."""
    if len(t) <= max_points:
        return t, y
    buckets = np.array_split(np.arange(len(t)), max_points // 2)
    keep = []
    for b in buckets:
        seg = y[b]
        lo, hi = b[int(np.argmin(seg))], b[int(np.argmax(seg))]
        keep.extend(sorted({lo, hi}))
    keep = np.array(keep)
    return t[keep], y[keep]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out, v = [], start
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


def svg_plot(
    times: np.ndarray,
    series: Sequence[tuple[str, np.ndarray]],
    title: str,
    reference: Optional[tuple[str, np.ndarray]] = None,
    width: int = 800,
    height: int = 450,
    max_points: int = 2000,
) -> str:
    """Static line chart; ``reference`` is drawn dashed and black."""
    left, right, top, bottom = 60, 130, 40, 45
    pw, ph = width - left - right, height - top - bottom
    t = np.asarray(times, dtype=float)
    all_y = [np.asarray(y, dtype=float) for _, y in series]
    if reference is not None:
        all_y.append(np.asarray(reference[1], dtype=float))
    ymin = min(float(np.min(y)) for y in all_y)
    ymax = max(float(np.max(y)) for y in all_y)
    if ymax - ymin < 1e-12:
        ymin, ymax = ymin - 1.0, ymax + 1.0
    pad = 0.05 * (ymax - ymin)
    ymin, ymax = ymin - pad, ymax + pad
    tmin, tmax = float(t[0]), float(t[-1])
    if tmax <= tmin:
        tmax = tmin + 1.0

    def px(tv):
        return left + (tv - tmin) / (tmax - tmin) * pw

    def py(yv):
        return top + (ymax - yv) / (ymax - ymin) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for tv in _ticks(tmin, tmax):
        x = px(tv)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="#444"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{tv:g}</text>')
    for yv in _ticks(ymin, ymax):
        y = py(yv)
        out.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end" font-family="sans-serif" font-size="11">{yv:g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-family="sans-serif" font-size="12">t</text>')

    def polyline(y, color, dash=""):
        tt, yy = _decimate(t, np.asarray(y, dtype=float), max_points)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(tt, yy))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        return f'<polyline fill="none" stroke="{color}" stroke-width="1.2"{extra} points="{pts}"/>'

    legend = []
    for i, (label, y) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        out.append(polyline(y, color))
        legend.append((label, color, ""))
    if reference is not None:
        out.append(polyline(reference[1], "black", "6,4"))
        legend.append((reference[0], "black", "6,4"))
    for i, (label, color, dash) in enumerate(legend):
        y = top + 12 + 18 * i
        x = left + pw + 12
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{x}" y1="{y}" x2="{x + 22}" y2="{y}" stroke="{color}" stroke-width="2"{extra}/>')
        out.append(f'<text x="{x + 28}" y="{y + 4}" font-family="sans-serif" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plot(path, traj: Trajectory, xstar: np.ndarray, title: str) -> None:
    series = []
    for i in range(traj.n_agents):
        for j in range(traj.dim):
            label = f"x_{i + 1}" if traj.dim == 1 else f"x_{i + 1},{j + 1}"
            series.append((label, traj.x[:, i, j]))
    ref = ("x*", xstar[:, 0]) if traj.dim == 1 else None
    Path(path).write_text(svg_plot(traj.times, series, title, ref), encoding="utf-8")
