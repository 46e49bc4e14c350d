"""Distance-versus-parameter sweeps, written as CSV and optionally as a small SVG."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .gaussian import DistanceKind, box_distance
from .geometry import RotatedBox

SWEEP_PARAMS = ("x", "y", "w", "h", "theta", "scale")
L2 = "l2"

# Scale-sweep fixture: a pair enlarged jointly by s.
FIGURE_LS_PRED = (0.0, 0.0, 1.0, 2.0, math.radians(5.0))
FIGURE_LS_TARGET = (1.0, 1.0, 1.1, 2.2, math.radians(5.0))
# Parameter-sweep fixture: target (0, 0, 1, h, 0) for each of these heights.
FIGURE_PR_HEIGHTS = (1.0, 2.0, 3.0, 4.0)


def l2_distance(p: RotatedBox, t: RotatedBox) -> float:
    """Plain l2 norm of the raw parameter differences (dx, dy, dw, dh, dtheta)."""
    return math.sqrt((p.x - t.x) ** 2 + (p.y - t.y) ** 2 + (p.w - t.w) ** 2
                     + (p.h - t.h) ** 2 + (p.theta - t.theta) ** 2)


def parse_columns(names) -> list:
    """Column names: distance kinds by value, plus ``l2``."""
    out = []
    for n in names:
        n = n.strip()
        if not n:
            continue
        if n.lower() == "all":
            out.extend(k.value for k in DistanceKind)
            out.append(L2)
        elif n.lower() == L2:
            out.append(L2)
        else:
            out.append(DistanceKind.parse(n).value)
    return list(dict.fromkeys(out))


def column_value(col: str, p: RotatedBox, t: RotatedBox) -> float:
    if col == L2:
        return l2_distance(p, t)
    return box_distance(DistanceKind(col), p, t)


def _with_param(box: RotatedBox, name: str, value: float) -> RotatedBox:
    x, y, w, h, th = box.as_tuple()
    vals = dict(x=x, y=y, w=w, h=h, theta=th)
    vals[name] = value
    return RotatedBox(vals["x"], vals["y"], vals["w"], vals["h"], vals["theta"])


@dataclass
class Landscape:
    sweep: str
    values: np.ndarray
    columns: list
    table: np.ndarray  # (len(values), len(columns))

    def column(self, name: str) -> np.ndarray:
        return self.table[:, self.columns.index(name)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.sweep] + self.columns)
        for v, row in zip(self.values, self.table):
            w.writerow([format(v, ".12g")] + [format(c, ".12g") for c in row])
        return buf.getvalue()


def sweep_values(lo: float, hi: float, steps: int) -> np.ndarray:
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ValueError(f"bad sweep range [{lo}, {hi}]")
    return np.linspace(lo, hi, steps)


def landscape(target: RotatedBox, sweep: str, lo: float, hi: float, steps: int, columns,
              pred: RotatedBox | None = None) -> Landscape:
    """Evaluate each column over a sweep.

    For ``scale`` both boxes are scaled by s about the origin. For any other
    parameter only the predicted box (default: a copy of the target) has that
    parameter set to the sweep value. Sizes at or below the epsilon floor raise
    SizeDegenerate.
    """
    if sweep not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {sweep!r}; choose from {', '.join(SWEEP_PARAMS)}")
    columns = parse_columns(columns)
    vals = sweep_values(lo, hi, steps)
    pred = target if pred is None else pred
    table = np.empty((len(vals), len(columns)))
    for i, v in enumerate(vals):
        if sweep == "scale":
            p, t = pred.scaled(v), target.scaled(v)
        else:
            p, t = _with_param(pred, sweep, v), target
        for j, col in enumerate(columns):
            table[i, j] = column_value(col, p, t)
    return Landscape(sweep, vals, columns, table)


def figure_ls(lo: float = 1.0, hi: float = 10.0, steps: int = 10, columns=("kld_forward", "gwd", L2)) -> Landscape:
    """Scale sweep on the (0, 0, s, 2s, 5 deg) / (s, s, 1.1s, 2.2s, 5 deg) pair."""
    return landscape(RotatedBox(*FIGURE_LS_TARGET), "scale", lo, hi, steps, columns,
                     pred=RotatedBox(*FIGURE_LS_PRED))


def figure_pr(sweep: str, lo: float, hi: float, steps: int, columns=("kld_forward", "gwd", L2)) -> Landscape:
    """One block of columns per target height h in {1, 2, 3, 4}, target (0, 0, 1, h, 0)."""
    blocks, names = [], []
    vals = None
    for h in FIGURE_PR_HEIGHTS:
        ls = landscape(RotatedBox(0.0, 0.0, 1.0, h, 0.0), sweep, lo, hi, steps, columns)
        vals = ls.values
        blocks.append(ls.table)
        names.extend(f"{c}@h={h:g}" for c in ls.columns)
    return Landscape(sweep, vals, names, np.hstack(blocks))


def to_svg(ls: Landscape, width: int = 640, height: int = 400, title: str = "") -> str:
    """Polyline per column on linear axes. A convenience view of the CSV."""
    margin_l, margin_r, margin_t, margin_b = 60, 160, 30, 40
    pw, ph = width - margin_l - margin_r, height - margin_t - margin_b
    x0, x1 = float(ls.values[0]), float(ls.values[-1])
    finite = ls.table[np.isfinite(ls.table)]
    y0, y1 = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def sx(v):
        return margin_l + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return margin_t + ph - (v - y0) / (y1 - y0) * ph

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<line x1="{margin_l}" y1="{margin_t + ph}" x2="{margin_l + pw}" y2="{margin_t + ph}" stroke="black"/>',
        f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" y2="{margin_t + ph}" stroke="black"/>',
        f'<text x="{margin_l + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">{escape(ls.sweep)}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        out.append(f'<text x="{sx(xv):.1f}" y="{margin_t + ph + 14}" text-anchor="middle" font-size="10">{xv:.3g}</text>')
        out.append(f'<text x="{margin_l - 4}" y="{sy(yv) + 3:.1f}" text-anchor="end" font-size="10">{yv:.3g}</text>')
    for j, name in enumerate(ls.columns):
        color = colors[j % len(colors)]
        pts = " ".join(f"{sx(v):.2f},{sy(c):.2f}" for v, c in zip(ls.values, ls.table[:, j]) if math.isfinite(c))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = margin_t + 14 * j + 10
        out.append(f'<line x1="{width - margin_r + 10}" y1="{ly}" x2="{width - margin_r + 30}" y2="{ly}" stroke="{color}"/>')
        out.append(f'<text x="{width - margin_r + 34}" y="{ly + 4}" font-size="11">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
