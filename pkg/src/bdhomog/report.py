"""Output helpers: fixed-precision JSON and CSV, and minimal SVG line plots."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON with every float written to 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def write_csv(path, header: list, rows: list) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(format(float(v), ".12e"))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def svg_lines(series: dict, xlabel: str, ylabel: str, title: str = "",
              width: int = 480, height: int = 320) -> str:
    """Polyline plot of {label: (xs, ys)} with markers; deterministic output."""
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys)]
    if not pts:
        pts = [(0.0, 0.0)]
    xmin, xmax = min(p[0] for p in pts), max(p[0] for p in pts)
    ymin, ymax = min(p[1] for p in pts), max(p[1] for p in pts)
    if xmax == xmin:
        xmin, xmax = xmin - 1, xmax + 1
    if ymax == ymin:
        ymin, ymax = ymin - 0.5 * max(abs(ymin), 1e-3), ymax + 0.5 * max(abs(ymax), 1e-3)
    ml, mr, mt, mb = 70, 20, 30, 45
    sx = lambda x: ml + (x - xmin) / (xmax - xmin) * (width - ml - mr)
    sy = lambda y: height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>',
           f'<text x="{(width + ml) / 2:.1f}" y="{height - 10}" text-anchor="middle">{xlabel}</text>',
           f'<text x="15" y="{(height - mb + mt) / 2:.1f}" text-anchor="middle" '
           f'transform="rotate(-90 15 {(height - mb + mt) / 2:.1f})">{ylabel}</text>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle">{title}</text>']
    for k in range(5):
        yv = ymin + k * (ymax - ymin) / 4
        out.append(f'<text x="{ml - 5}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.4g}</text>')
        xv = xmin + k * (xmax - xmin) / 4
        out.append(f'<text x="{sx(xv):.1f}" y="{height - mb + 15}" text-anchor="middle">{xv:.3g}</text>')
    for i, (label, (xs, ys)) in enumerate(series.items()):
        col = colors[i % len(colors)]
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{path}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        for x, y in zip(xs, ys):
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{col}"/>')
        out.append(f'<text x="{width - mr - 5}" y="{mt + 14 * (i + 1)}" text-anchor="end" '
                   f'fill="{col}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
