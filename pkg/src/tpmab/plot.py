"""Standalone SVG rendering of regret curves, bound curves and PMF bar charts."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Series", "PlotError", "read_series", "read_bound_series", "line_chart_svg", "bar_chart_svg"]

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
RESULT_COLUMNS = ("policy_name", "t", "mean_regret", "ci_half_width")
BOUND_COLUMNS = ("T", "lower_bound", "upper_bound", "upper_bound_uniform")

WIDTH, HEIGHT = 820, 520
LEFT, RIGHT, TOP, BOTTOM = 80, 230, 30, 60


class PlotError(ValueError):
    pass


@dataclass
class Series:
    name: str
    x: np.ndarray
    y: np.ndarray
    band: np.ndarray | None = None
    dashed: bool = False
    meta: dict = field(default_factory=dict)


def _read_rows(path: Path) -> tuple[list[str], list[dict]]:
    if not path.is_file():
        raise PlotError(f"{path}: file not found")
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = list(reader.fieldnames or [])
        rows = list(reader)
    return header, rows


def _require(path: Path, header: list[str], columns) -> None:
    missing = [c for c in columns if c not in header]
    if missing:
        raise PlotError(f"{path}: missing columns {', '.join(missing)} (found: {', '.join(header) or 'none'})")


def read_bound_series(path: str | Path) -> list[Series]:
    """Bound curves from a bounds CSV; non-finite values are dropped."""
    path = Path(path)
    header, rows = _read_rows(path)
    _require(path, header, BOUND_COLUMNS)
    if not rows:
        raise PlotError(f"{path}: no data rows")
    t = np.array([float(r["T"]) for r in rows])
    out = []
    for col, label in (("upper_bound", "upper bound"), ("upper_bound_uniform", "upper bound (uniform)"), ("lower_bound", "lower bound")):
        y = np.array([float(r[col]) for r in rows])
        keep = np.isfinite(y)
        if keep.any():
            out.append(Series(label, t[keep], y[keep], dashed=True))
    return out


def read_series(path: str | Path) -> list[Series]:
    """Regret series from a results CSV or JSON, or bound curves from a bounds CSV."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        if not path.is_file():
            raise PlotError(f"{path}: file not found")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise PlotError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        policies = data.get("policies") if isinstance(data, dict) else None
        if not isinstance(policies, list):
            raise PlotError(f"{path}: missing 'policies' list")
        out = []
        for i, p in enumerate(policies):
            missing = [k for k in ("name", "rounds", "mean_regret", "ci_half_width") if k not in p]
            if missing:
                raise PlotError(f"{path}: policies[{i}] missing fields {', '.join(missing)}")
            out.append(Series(p["name"], np.asarray(p["rounds"], float), np.asarray(p["mean_regret"], float), np.asarray(p["ci_half_width"], float)))
        if not any(s.x.size for s in out):
            raise PlotError(f"{path}: no data rows")
        return out
    header, rows = _read_rows(path)
    if "T" in header and "policy_name" not in header:
        return read_bound_series(path)
    _require(path, header, RESULT_COLUMNS)
    if not rows:
        raise PlotError(f"{path}: no data rows")
    grouped: dict[str, list[tuple[float, float, float]]] = {}
    for lineno, r in enumerate(rows, start=2):
        try:
            grouped.setdefault(r["policy_name"], []).append((float(r["t"]), float(r["mean_regret"]), float(r["ci_half_width"])))
        except (TypeError, ValueError):
            raise PlotError(f"{path}:{lineno}: non-numeric value") from None
    out = []
    for name, pts in grouped.items():
        arr = np.array(pts)
        out.append(Series(name, arr[:, 0], arr[:, 1], arr[:, 2]))
    return out


def _nice_ticks(lo: float, hi: float, count: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 10))
        v += step
    return ticks


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.3g}"
    return f"{v:g}"


def _header(title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]


def line_chart_svg(
    series: list[Series],
    log_x: bool = False,
    title: str = "Cumulative regret",
    x_label: str = "round t",
    y_label: str = "cumulative regret",
) -> str:
    """One polyline per series, shaded band where a CI is present, legend on the right."""
    series = [s for s in series if s.x.size]
    if not series:
        raise PlotError("no data rows")
    if log_x and any(np.any(s.x <= 0) for s in series):
        raise PlotError("log-scaled x axis needs positive rounds")
    xs = np.concatenate([s.x for s in series])
    ys = np.concatenate([s.y + (s.band if s.band is not None else 0) for s in series])
    fx = np.log10 if log_x else (lambda v: np.asarray(v, dtype=float))
    x_lo, x_hi = float(fx(xs.min())), float(fx(xs.max()))
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    y_lo = 0.0
    y_hi = float(max(ys.max(), 1e-12)) * 1.05
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(v):
        return LEFT + (fx(v) - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return TOP + ph - (np.asarray(v, dtype=float) - y_lo) / (y_hi - y_lo) * ph

    out = _header(title)
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    # axes and ticks
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for v in _nice_ticks(y_lo, y_hi):
        y = float(py(v))
        out.append(f'<line x1="{LEFT - 4}" y1="{y:.2f}" x2="{LEFT + pw}" y2="{y:.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 7}" y="{y + 4:.2f}" text-anchor="end">{_fmt(v)}</text>')
    if log_x:
        x_ticks = [10.0**k for k in range(math.ceil(x_lo), math.floor(x_hi) + 1)]
    else:
        x_ticks = _nice_ticks(x_lo, x_hi)
    for v in x_ticks:
        x = float(px(v))
        out.append(f'<line x1="{x:.2f}" y1="{TOP}" x2="{x:.2f}" y2="{TOP + ph + 4}" stroke="#dddddd"/>')
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{_fmt(v)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(x_label)}{" (log scale)" if log_x else ""}</text>')
    out.append(
        f'<text x="18" y="{TOP + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 18 {TOP + ph / 2:.1f})">{escape(y_label)}</text>'
    )
    # curves
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        xp = px(s.x)
        if s.band is not None and np.any(s.band > 0):
            upper = py(s.y + s.band)
            lower = py(np.maximum(s.y - s.band, y_lo))
            pts = list(zip(xp, upper)) + list(zip(xp[::-1], lower[::-1]))
            coords = " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)
            out.append(f'<polygon points="{coords}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        coords = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xp, py(s.y)))
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
    # legend
    lx = LEFT + pw + 15
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        y = TOP + 10 + 18 * i
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 22}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{lx + 28}" y="{y + 4}">{escape(s.name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bar_chart_svg(probs: list[float], title: str) -> str:
    """Bar chart of a PMF over indices 1..len(probs)."""
    if not probs:
        raise PlotError("no data rows")
    n = len(probs)
    pw, ph = WIDTH - LEFT - 40, HEIGHT - TOP - BOTTOM
    top = max(max(probs), 1e-12) * 1.05
    out = _header(title)
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for v in _nice_ticks(0.0, top):
        y = TOP + ph - v / top * ph
        out.append(f'<line x1="{LEFT - 4}" y1="{y:.2f}" x2="{LEFT + pw}" y2="{y:.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 7}" y="{y + 4:.2f}" text-anchor="end">{_fmt(v)}</text>')
    slot = pw / n
    label_every = max(1, n // 20)
    for k, p in enumerate(probs, start=1):
        h = p / top * ph
        x = LEFT + (k - 1) * slot
        out.append(f'<rect x="{x + 0.1 * slot:.2f}" y="{TOP + ph - h:.2f}" width="{0.8 * slot:.2f}" height="{h:.2f}" fill="{PALETTE[0]}"/>')
        if k % label_every == 0 or k == 1:
            out.append(f'<text x="{x + slot / 2:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{k}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">z-group index k</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
