"""Deterministic CSV / JSON writers and a dependency-free SVG line plot."""

from __future__ import annotations

import json
import os
from typing import Iterable, Sequence

import numpy as np


def fmt(value) -> str:
    """Stable scalar formatting: shortest round-trip for floats."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_json(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)

    def default(obj):
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        raise TypeError(f"not JSON serializable: {type(obj)}")

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")


def read_xy_csv(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    """Read a dataset CSV with a one-line header: x,y,y_err columns."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] < 3:
        raise ValueError(f"{path}: need at least three columns (x, y, y_err)")
    meta = {"columns": header}
    return data[:, 0], data[:, 1], data[:, 2], meta


def svg_line_plot(path: str, x: Sequence[float], series: dict[str, Sequence[float]],
                  x_label: str = "", y_label: str = "", title: str = "",
                  log_y: bool = False, width: int = 640, height: int = 420) -> None:
    """Minimal multi-series line plot; one polyline per series."""
    x = np.asarray(x, dtype=float)
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    margin = 56
    inner_w, inner_h = width - 2 * margin, height - 2 * margin

    all_y = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    if log_y:
        all_y = all_y[all_y > 0]
        y_lo, y_hi = np.log10(all_y.min()), np.log10(all_y.max())
    else:
        y_lo, y_hi = float(all_y.min()), float(all_y.max())
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    x_lo, x_hi = float(x.min()), float(x.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    def sx(v):
        return margin + (v - x_lo) / (x_hi - x_lo) * inner_w

    def sy(v):
        vv = np.log10(v) if log_y else v
        return height - margin - (vv - y_lo) / (y_hi - y_lo) * inner_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{inner_w}" height="{inner_h}" '
        'fill="none" stroke="black"/>',
    ]
    for k in range(5):
        xv = x_lo + k * (x_hi - x_lo) / 4
        yv = y_lo + k * (y_hi - y_lo) / 4
        parts.append(
            f'<text x="{sx(xv):.1f}" y="{height - margin + 18}" font-size="11" '
            f'text-anchor="middle">{xv:.3g}</text>')
        label = 10**yv if log_y else yv
        parts.append(
            f'<text x="{margin - 6}" y="{height - margin - k * inner_h / 4 + 4:.1f}" '
            f'font-size="11" text-anchor="end">{label:.3g}</text>')
    for idx, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=float)
        pts = " ".join(
            f"{sx(xx):.2f},{sy(yy):.2f}" for xx, yy in zip(x, ys)
            if np.isfinite(yy) and (not log_y or yy > 0)
        )
        color = colors[idx % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="1.5"/>')
        parts.append(f'<text x="{margin + 8}" y="{margin + 16 + 14 * idx}" '
                     f'font-size="12" fill="{color}">{name}</text>')
    if title:
        parts.append(f'<text x="{width / 2}" y="20" font-size="14" '
                     f'text-anchor="middle">{title}</text>')
    if x_label:
        parts.append(f'<text x="{width / 2}" y="{height - 8}" font-size="12" '
                     f'text-anchor="middle">{x_label}</text>')
    if y_label:
        parts.append(f'<text x="14" y="{height / 2}" font-size="12" '
                     f'text-anchor="middle" transform="rotate(-90 14 {height / 2})">'
                     f'{y_label}</text>')
    parts.append("</svg>")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
