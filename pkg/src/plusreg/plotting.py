"""
Metric curves against ``lam / sqrt(log(p)/n)``.

``svg_line_chart`` writes a standalone SVG from primitives with fixed number
formatting, so identical input gives identical bytes.  ``render_figures``
draws the same curves with matplotlib for the report directory of a
simulation run.
"""

from __future__ import annotations

import math
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["svg_line_chart", "metrics_svg", "render_figures", "MARKER_RATIO"]

MARKER_RATIO = math.sqrt(2.0)

_COLORS = ("#1f3b73", "#b2182b", "#2f7d32", "#6a3d9a", "#e08214")
_DASHES = ("", "6,4", "2,3", "8,3,2,3", "1,2")
_LABELS = {"lasso": "LASSO", "mcp": "MC+", "scad": "SCAD"}


def _nice_ticks(lo: float, hi: float, count: int = 5) -> List[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def svg_line_chart(
    series: Mapping[str, Tuple[Sequence[float], Sequence[float]]],
    marker_x: Optional[float] = MARKER_RATIO,
    xlabel: str = "lambda / sqrt(log(p)/n)",
    ylabel: str = "",
    title: str = "",
    width: int = 560,
    height: int = 380,
) -> str:
    """
    Line chart with one ``<polyline>`` per series and one dotted ``<line>``
    at ``marker_x``.  Axes, ticks and legend are drawn with ``<path>``,
    ``<text>`` and ``<rect>`` elements only.
    """
    left, right, top, bottom = 64, 130, 34, 52
    pw, ph = width - left - right, height - top - bottom
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()]) if series else np.zeros(1)
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()]) if series else np.zeros(1)
    ys = ys[np.isfinite(ys)]
    x0, x1 = float(xs.min()), float(xs.max())
    if marker_x is not None:
        x0, x1 = min(x0, marker_x), max(x1, marker_x)
    y0 = min(0.0, float(ys.min())) if ys.size else 0.0
    y1 = float(ys.max()) if ys.size else 1.0
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0
    y1 += 0.05 * (y1 - y0)

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.2f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(
        f'<path class="axis" d="M{left:.2f},{top:.2f} V{top + ph:.2f} H{left + pw:.2f}" '
        'fill="none" stroke="#000000" stroke-width="1"/>'
    )
    for t in _nice_ticks(x0, x1):
        if x0 - 1e-12 <= t <= x1 + 1e-12:
            px = sx(t)
            out.append(f'<path class="tick" d="M{px:.2f},{top + ph:.2f} v5" stroke="#000000"/>')
            out.append(f'<text x="{px:.2f}" y="{top + ph + 17:.2f}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(y0, y1):
        if y0 - 1e-12 <= t <= y1 + 1e-12:
            py = sy(t)
            out.append(f'<path class="tick" d="M{left:.2f},{py:.2f} h-5" stroke="#000000"/>')
            out.append(f'<text x="{left - 8:.2f}" y="{py + 4:.2f}" text-anchor="end">{t:g}</text>')
    out.append(
        f'<text x="{left + pw / 2:.2f}" y="{height - 12:.2f}" text-anchor="middle">{escape(xlabel)}</text>'
    )
    if ylabel:
        out.append(
            f'<text x="16" y="{top + ph / 2:.2f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {top + ph / 2:.2f})">{escape(ylabel)}</text>'
        )
    if marker_x is not None:
        mx = sx(marker_x)
        out.append(
            f'<line class="marker" x1="{mx:.2f}" y1="{top:.2f}" x2="{mx:.2f}" y2="{top + ph:.2f}" '
            'stroke="#555555" stroke-dasharray="2,3"/>'
        )
    for i, (name, (x, y)) in enumerate(series.items()):
        pts = " ".join(
            f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(np.asarray(x, float), np.asarray(y, float)) if np.isfinite(b)
        )
        color, dash = _COLORS[i % len(_COLORS)], _DASHES[i % len(_DASHES)]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(
            f'<polyline class="series" data-name="{escape(name)}" points="{pts}" fill="none" '
            f'stroke="{color}" stroke-width="1.6"{dash_attr}/>'
        )
        ly = top + 10 + 18 * i
        lx = left + pw + 12
        out.append(f'<rect x="{lx:.2f}" y="{ly - 1:.2f}" width="22" height="2" fill="{color}"/>')
        out.append(f'<text x="{lx + 28:.2f}" y="{ly + 4:.2f}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _series_from_rows(rows: Iterable[Mapping[str, object]], metric: str):
    series: Dict[str, Tuple[List[float], List[float]]] = {}
    for row in rows:
        name = _LABELS.get(str(row["method"]), str(row["method"]))
        xs, ys = series.setdefault(name, ([], []))
        xs.append(float(row["lambda_ratio"]))
        ys.append(float(row[metric]))
    for name, (xs, ys) in series.items():
        order = np.argsort(xs, kind="stable")
        series[name] = ([xs[i] for i in order], [ys[i] for i in order])
    return series


def metrics_svg(rows: Iterable[Mapping[str, object]], metric: str = "mean_me", title: str = "") -> str:
    """SVG of one metric column, one series per method."""
    return svg_line_chart(_series_from_rows(rows, metric), ylabel=metric, title=title)


def render_figures(records, outdir, stem: str = "metrics", fmt: str = "png") -> List[str]:
    """
    Write ME and TM curves (one line per method, dotted vertical at
    ``sqrt(2)``) with matplotlib.  Returns the written file paths.
    """
    import os

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [
        {"method": r.method, "lambda_ratio": r.lambda_ratio, "mean_me": r.mean_me, "mean_tm": r.mean_tm}
        if not isinstance(r, Mapping) else r
        for r in records
    ]
    styles = {"MC+": "-", "SCAD": "--", "LASSO": ":"}
    os.makedirs(outdir, exist_ok=True)
    written = []
    for metric, label in (("mean_me", "average ME"), ("mean_tm", "average TM")):
        fig, ax = plt.subplots(figsize=(4.5, 3.4))
        for name, (xs, ys) in _series_from_rows(rows, metric).items():
            ax.plot(xs, ys, styles.get(name, "-."), color="k", lw=1.2, label=name)
        ax.axvline(MARKER_RATIO, color="0.4", ls=":", lw=1)
        ax.set_xlabel(r"$\lambda/\sqrt{(\log p)/n}$")
        ax.set_ylabel(label)
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        path = os.path.join(outdir, f"{stem}_{metric.split('_', 1)[1]}.{fmt}")
        fig.savefig(path, dpi=150, metadata={"Software": None} if fmt == "png" else None)
        plt.close(fig)
        written.append(path)
    return written
