"""Static SVG views of analysis outputs.

SVG is written by hand with fixed-precision coordinates so that identical
inputs give byte-identical files. Every renderer also returns the table it
plotted; :func:`save_plot` writes both side by side.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np
import pandas as pd

from .analysis import InterestingnessRecord, record_columns, split_factor_key
from .dimensions import DIMENSIONS

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf")
FONT = 'font-family="sans-serif" font-size="11"'


def _f(x: float) -> str:
    return f"{x:.2f}"


def _doc(width: int, height: int, body: list[str], title: str) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, f"<title>{escape(title)}</title>",
                      f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _text(x, y, s, anchor="start", extra="") -> str:
    return f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}" {FONT}{extra}>{escape(str(s))}</text>'


def _line(x1, y1, x2, y2, stroke="#999", width=1.0, dash=False) -> str:
    d = ' stroke-dasharray="3,3"' if dash else ""
    return (f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" stroke="{stroke}" '
            f'stroke-width="{width}"{d}/>')


def save_plot(svg: str, table: pd.DataFrame, stem) -> tuple[Path, Path]:
    """Write ``stem.svg`` and ``stem.csv``; returns both paths."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    svg_path, csv_path = stem.with_suffix(".svg"), stem.with_suffix(".csv")
    svg_path.write_text(svg, encoding="utf-8")
    table.to_csv(csv_path, index=False, float_format="%.17g")
    return svg_path, csv_path


# -- time series --------------------------------------------------------------

def timeseries_table(records: Sequence[InterestingnessRecord], trace_id: str,
                     dims: Sequence[str] | None = None) -> pd.DataFrame:
    """One row per step with a column per requested dimension and its factor series."""
    recs = sorted((r for r in records if r.trace_id == trace_id), key=lambda r: r.step)
    if not recs:
        raise KeyError(f"no records for trace {trace_id!r}")
    cols = record_columns(recs)
    dims = list(dims) if dims is not None else [c for c in cols if split_factor_key(c)[1] is None]
    for d in dims:
        if d not in DIMENSIONS:
            raise ValueError(f"unknown dimension {d!r}")
    series = []
    for d in dims:
        series.append(d)
        series += [c for c in cols if split_factor_key(c)[1] is not None and split_factor_key(c)[0] == d]
    data = {"step": [r.step for r in recs]}
    for s in series:
        data[s] = [np.nan if (v := r.get(s)) is None else float(v) for r in recs]
    return pd.DataFrame(data)


def render_timeseries(records: Sequence[InterestingnessRecord], trace_id: str,
                      dims: Sequence[str] | None = None) -> tuple[str, pd.DataFrame]:
    """Line plot of dimensions over a trace's steps; per-factor series are dashed."""
    table = timeseries_table(records, trace_id, dims)
    series = [c for c in table.columns if c != "step"]
    W, H, left, right, top, bottom = 720, 320, 50, 170, 30, 40
    pw, ph = W - left - right, H - top - bottom
    steps = table["step"].to_numpy()
    s0, s1 = float(steps.min()), float(steps.max())
    sx = (lambda s: left + pw * (s - s0) / (s1 - s0)) if s1 > s0 else (lambda s: left + pw / 2)
    sy = lambda v: top + ph * (1.0 - (v + 1.0) / 2.0)
    body = [_line(left, sy(v), left + pw, sy(v), "#ddd" if v else "#999") for v in (-1, -0.5, 0, 0.5, 1)]
    body += [_text(left - 6, sy(v) + 4, f"{v:g}", "end") for v in (-1, 0, 1)]
    body.append(_text(left + pw / 2, H - 8, "step", "middle"))
    body.append(_text(left, 18, f"trace {trace_id}"))
    for i, col in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        dashed = split_factor_key(col)[1] is not None
        vals = table[col].to_numpy()
        pts = [(sx(s), sy(v)) for s, v in zip(steps, vals) if not math.isnan(v)]
        if pts:
            d = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
            dash = ' stroke-dasharray="4,2"' if dashed else ""
            body.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        ly = top + 14 * i + 6
        body.append(_line(W - right + 10, ly, W - right + 28, ly, color, 2, dashed))
        body.append(_text(W - right + 32, ly + 4, col))
    return _doc(W, H, body, f"interestingness over time: {trace_id}"), table


# -- radar --------------------------------------------------------------------

def profiles_table(profiles: Mapping[str, Mapping[str, float]]) -> tuple[list[str], pd.DataFrame]:
    dims = [d for d in DIMENSIONS if all(d in p for p in profiles.values())]
    extra = sorted({k for p in profiles.values() for k in p} - set(DIMENSIONS))
    dims += [k for k in extra if all(k in p for p in profiles.values())]
    rows = [[name] + [float(profiles[name][d]) for d in dims] for name in profiles]
    return dims, pd.DataFrame(rows, columns=["profile"] + dims)


def render_radar(profiles: Mapping[str, Mapping[str, float]]) -> tuple[str, pd.DataFrame]:
    """One polygon per profile on axes spanning ``[-1, 1]``.

    Falls back to a grouped bar chart when fewer than three dimensions are
    shared by all profiles.
    """
    if not profiles:
        raise ValueError("need at least one profile")
    dims, table = profiles_table(profiles)
    if len(dims) < 3:
        return _render_bars(dims, table), table
    W, H, cx, cy, R = 560, 440, 220, 220, 160
    rad = lambda v: R * (v + 1.0) / 2.0
    ang = [-math.pi / 2 + 2 * math.pi * i / len(dims) for i in range(len(dims))]
    body = []
    for level in (-1.0, -0.5, 0.0, 0.5, 1.0):
        ring = " ".join(f"{_f(cx + rad(level) * math.cos(a))},{_f(cy + rad(level) * math.sin(a))}"
                        for a in ang)
        stroke = "#999" if level == 0 else "#ddd"
        body.append(f'<polygon points="{ring}" fill="none" stroke="{stroke}"/>')
    for d, a in zip(dims, ang):
        body.append(_line(cx, cy, cx + R * math.cos(a), cy + R * math.sin(a), "#ccc"))
        body.append(_text(cx + (R + 14) * math.cos(a), cy + (R + 14) * math.sin(a) + 4, d, "middle"))
    for i, row in enumerate(table.itertuples(index=False)):
        color = PALETTE[i % len(PALETTE)]
        vals = list(row)[1:]
        pts = " ".join(f"{_f(cx + rad(v) * math.cos(a))},{_f(cy + rad(v) * math.sin(a))}"
                       for v, a in zip(vals, ang))
        body.append(f'<polygon points="{pts}" fill="{color}" fill-opacity="0.12" stroke="{color}" '
                    f'stroke-width="1.5"/>')
        body.append(f'<rect x="420" y="{_f(30 + 16 * i)}" width="12" height="12" fill="{color}"/>')
        body.append(_text(438, 40 + 16 * i, row[0]))
    return _doc(W, H, body, "interestingness profiles"), table


def _render_bars(dims: list[str], table: pd.DataFrame) -> str:
    n_prof = len(table)
    W, H, left, top, ph = 560, 320, 50, 30, 240
    group = max(1, len(dims))
    gw = (W - left - 150) / group
    bw = gw * 0.8 / max(1, n_prof)
    sy = lambda v: top + ph * (1.0 - (v + 1.0) / 2.0)
    body = [_line(left, sy(0), left + gw * group, sy(0), "#999")]
    body += [_text(left - 6, sy(v) + 4, f"{v:g}", "end") for v in (-1, 0, 1)]
    for j, d in enumerate(dims):
        x0 = left + gw * j + gw * 0.1
        body.append(_text(left + gw * j + gw / 2, top + ph + 16, d, "middle"))
        for i, row in enumerate(table.itertuples(index=False)):
            v = float(row[1 + j])
            y, h = min(sy(v), sy(0)), abs(sy(v) - sy(0))
            body.append(f'<rect x="{_f(x0 + i * bw)}" y="{_f(y)}" width="{_f(bw)}" height="{_f(h)}" '
                        f'fill="{PALETTE[i % len(PALETTE)]}"/>')
    for i, name in enumerate(table["profile"]):
        body.append(f'<rect x="{W - 140}" y="{_f(30 + 16 * i)}" width="12" height="12" '
                    f'fill="{PALETTE[i % len(PALETTE)]}"/>')
        body.append(_text(W - 122, 40 + 16 * i, name))
    return _doc(W, H, body, "interestingness profiles (bars)")


# -- attribution plots --------------------------------------------------------

def _value_color(t: float) -> str:
    # blue (low feature value) to red (high)
    r = int(round(30 + 200 * t))
    b = int(round(230 - 200 * t))
    return f"#{r:02x}40{b:02x}"


def render_beeswarm(beeswarm: pd.DataFrame, ranking: pd.DataFrame) -> tuple[str, pd.DataFrame]:
    """Shapley value per explained row, one lane per top feature, coloured by feature value."""
    features = [f for f in ranking["feature"] if f in set(beeswarm["feature"])]
    W, left, right, lane = 720, 150, 30, 28
    H = 60 + lane * max(1, len(features))
    lim = float(np.max(np.abs(beeswarm["shap"]))) if len(beeswarm) else 1.0
    lim = lim if lim > 0 else 1.0
    pw = W - left - right
    sx = lambda v: left + pw * (v + lim) / (2 * lim)
    body = [_line(sx(0), 20, sx(0), H - 30, "#999"),
            _text(left + pw / 2, H - 8, "Shapley value (impact on prediction)", "middle")]
    for i, f in enumerate(features):
        cy = 34 + lane * i
        body.append(_text(left - 8, cy + 4, f, "end"))
        sub = beeswarm[beeswarm["feature"] == f]
        vals = sub["value"].to_numpy(dtype=float)
        lo, hi = (float(vals.min()), float(vals.max())) if len(vals) else (0.0, 0.0)
        shap = sub["shap"].to_numpy(dtype=float)
        # deterministic vertical spread: rank within 1-pixel bins
        bins = np.round(sx(shap)).astype(int)
        seen: dict[int, int] = {}
        for s, v, b in zip(shap, vals, bins):
            k = seen.get(b, 0)
            seen[b] = k + 1
            dy = ((k + 1) // 2) * (1 if k % 2 else -1) * 1.5
            dy = max(-lane / 2 + 2, min(lane / 2 - 2, dy))
            t = (v - lo) / (hi - lo) if hi > lo else 0.5
            body.append(f'<circle cx="{_f(sx(s))}" cy="{_f(cy + dy)}" r="2" fill="{_value_color(t)}"/>')
    return _doc(W, H, body, "Shapley value density"), beeswarm


def render_waterfall(waterfall) -> tuple[str, pd.DataFrame]:
    """Cumulative bars from the base value to the prediction for one timestep."""
    table = waterfall.to_frame()
    steps = list(zip(table["feature"], table["contribution"]))[::-1]
    W, left, right, lane = 720, 200, 40, 24
    H = 80 + lane * len(steps)
    running = [waterfall.base_value]
    for _, c in steps:
        running.append(running[-1] + c)
    lo, hi = min(running), max(running)
    pad = (hi - lo) * 0.05 or 0.05
    lo, hi = lo - pad, hi + pad
    pw = W - left - right
    sx = lambda v: left + pw * (v - lo) / (hi - lo)
    body = [_text(10, 18, f"trace {waterfall.trace_id} step {waterfall.step}")]
    for i, (name, c) in enumerate(steps):
        y = 30 + lane * i
        a, b = running[i], running[i + 1]
        color = "#d62728" if c >= 0 else "#1f77b4"
        body.append(f'<rect x="{_f(sx(min(a, b)))}" y="{_f(y)}" width="{_f(max(0.5, abs(sx(b) - sx(a))))}" '
                    f'height="{lane - 6}" fill="{color}"/>')
        body.append(_text(left - 8, y + lane / 2, name, "end"))
        body.append(_text(sx(max(a, b)) + 4, y + lane / 2, f"{c:+.3g}"))
    yb = 30 + lane * len(steps)
    body.append(_line(sx(waterfall.base_value), 24, sx(waterfall.base_value), yb, "#666", dash=True))
    body.append(_line(sx(waterfall.prediction), 24, sx(waterfall.prediction), yb, "#000"))
    body.append(_text(sx(waterfall.base_value), yb + 16, f"base {waterfall.base_value:.3g}", "middle"))
    body.append(_text(sx(waterfall.prediction), yb + 32, f"prediction {waterfall.prediction:.3g}", "middle"))
    return _doc(W, H, body, "local explanation"), table
