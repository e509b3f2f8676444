"""Self-contained SVG plots for experiment records.

One fixed-format SVG builder (axes, data series, reference overlays)
keeps the artifact dependency-free and diffable: tests can count data
points structurally instead of comparing raster bytes.
"""

from __future__ import annotations

import math

import numpy as np

WIDTH, HEIGHT = 640, 440
MARGIN = 60

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]


class PlotDataError(ValueError):
    pass


def _transform(xs, ys, xlog, ylog):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xlog:
        if np.any(xs <= 0):
            raise PlotDataError("log x-axis needs positive values")
        xs = np.log10(xs)
    if ylog:
        if np.any(ys <= 0):
            raise PlotDataError("log y-axis needs positive values")
        ys = np.log10(ys)
    return xs, ys


def _ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, count)


def render_svg(series, xlabel, ylabel, title, xlog=False, ylog=False):
    """Render line/point series into one SVG document string.

    series: list of dicts with keys x, y, label, and optional kind
    ("line", "points", or "steps") and dash.
    """
    if not series or all(len(s["x"]) == 0 for s in series):
        raise PlotDataError("no data to plot")
    txs, tys = [], []
    prepared = []
    for s in series:
        if len(s["x"]) != len(s["y"]):
            raise PlotDataError("series x and y lengths differ")
        xs, ys = _transform(s["x"], s["y"], xlog, ylog)
        prepared.append({**s, "tx": xs, "ty": ys})
        txs.append(xs)
        tys.append(ys)
    ax = np.concatenate(txs)
    ay = np.concatenate(tys)
    x0, x1 = float(ax.min()), float(ax.max())
    y0, y1 = float(ay.min()), float(ay.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    padx, pady = 0.04 * (x1 - x0), 0.06 * (y1 - y0)
    x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady

    def sx(v):
        return MARGIN + (v - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)

    def sy(v):
        return HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2 * MARGIN)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="20" text-anchor="middle" font-size="13">{title}</text>',
    ]
    # axes and ticks
    out.append(
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
        f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="black"/>'
    )
    for tv in _ticks(x0 + padx, x1 - padx):
        label = f"1e{tv:.2g}" if xlog else f"{tv:.3g}"
        out.append(
            f'<line x1="{sx(tv):.1f}" y1="{HEIGHT - MARGIN}" x2="{sx(tv):.1f}" '
            f'y2="{HEIGHT - MARGIN + 5}" stroke="black"/>'
            f'<text x="{sx(tv):.1f}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle">{label}</text>'
        )
    for tv in _ticks(y0 + pady, y1 - pady):
        label = f"1e{tv:.2g}" if ylog else f"{tv:.3g}"
        out.append(
            f'<line x1="{MARGIN - 5}" y1="{sy(tv):.1f}" x2="{MARGIN}" y2="{sy(tv):.1f}" '
            f'stroke="black"/>'
            f'<text x="{MARGIN - 8}" y="{sy(tv):.1f}" text-anchor="end" dy="4">{label}</text>'
        )
    out.append(
        f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle">{xlabel}</text>'
    )
    out.append(
        f'<text x="16" y="{HEIGHT / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {HEIGHT / 2:.0f})">{ylabel}</text>'
    )

    for si, s in enumerate(prepared):
        color = _PALETTE[si % len(_PALETTE)]
        kind = s.get("kind", "line")
        dash = ' stroke-dasharray="6 4"' if s.get("dash") else ""
        pts = list(zip(s["tx"], s["ty"]))
        if kind == "points":
            for px, py in pts:
                out.append(
                    f'<circle class="datapoint" cx="{sx(px):.2f}" cy="{sy(py):.2f}" '
                    f'r="2.5" fill="{color}"/>'
                )
        else:
            coords = []
            if kind == "steps":
                prev = None
                for px, py in pts:
                    if prev is not None:
                        coords.append((px, prev))
                    coords.append((px, py))
                    prev = py
            else:
                coords = pts
            path = " ".join(f"{sx(px):.2f},{sy(py):.2f}" for px, py in coords)
            out.append(
                f'<polyline class="dataseries" points="{path}" fill="none" '
                f'stroke="{color}" stroke-width="1.5"{dash}/>'
            )
        out.append(
            f'<text x="{WIDTH - MARGIN - 6}" y="{MARGIN + 16 + 14 * si}" text-anchor="end" '
            f'fill="{color}">{s.get("label", f"series {si}")}</text>'
        )
    out.append("</svg>")
    return "\n".join(out)


def emit_plot(record, kind: str, path: str) -> None:
    """Write a plot of an ExperimentRecord's series data.

    Kinds: "loglog" (covering numbers with a slope-1/2 guide line),
    "cdf" (empirical CDF with the series-oracle curve), "trace"
    (block-count trace with the theta overlay).  Raises PlotDataError
    when the record lacks the needed series.
    """
    s = record.series
    if kind == "loglog":
        if "eps" not in s or "counts" not in s:
            raise PlotDataError("loglog plot needs eps and counts series")
        eps = np.asarray(s["eps"], dtype=float)
        counts = np.asarray(s["counts"], dtype=float)
        if len(eps) == 0:
            raise PlotDataError("empty data")
        anchor = counts[0] * math.sqrt(eps[0])
        doc = render_svg(
            [
                {"x": 1.0 / eps, "y": counts, "label": "covering number", "kind": "points"},
                {"x": 1.0 / eps, "y": anchor * np.sqrt(1.0 / eps), "label": "slope 1/2 guide", "dash": True},
            ],
            xlabel="1/eps (log)",
            ylabel="N(eps) (log)",
            title=record.name,
            xlog=True,
            ylog=True,
        )
    elif kind == "cdf":
        if "t" not in s or "empirical" not in s:
            raise PlotDataError("cdf plot needs t and empirical series")
        entries = [
            {"x": s["t"], "y": s["empirical"], "label": "empirical CDF", "kind": "steps"}
        ]
        if "reference" in s:
            entries.append({"x": s["t"], "y": s["reference"], "label": "series oracle", "dash": True})
        doc = render_svg(entries, xlabel="t", ylabel="P{meet by t}", title=record.name)
    elif kind == "trace":
        if "t" not in s or "mean_count" not in s:
            raise PlotDataError("trace plot needs t and mean_count series")
        entries = [{"x": s["t"], "y": s["mean_count"], "label": "mean N(t)", "kind": "points"}]
        if "reference" in s:
            entries.append({"x": s["t"], "y": s["reference"], "label": "theta(t/4pi)", "dash": True})
        doc = render_svg(entries, xlabel="t", ylabel="blocks", title=record.name)
    else:
        raise PlotDataError(f"unknown plot kind {kind!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(doc)
