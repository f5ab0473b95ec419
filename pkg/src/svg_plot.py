"""
Self-contained SVG line plots
A minimal painter that writes SVG primitives directly, plus a line-plot helper
"""
import os
from dataclasses import dataclass
from typing import List, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

from src.errors import DataError

SERIES_COLORS = ["#1F77B4", "#D62728", "#2CA02C", "#9467BD", "#FF7F0E", "#8C564B"]


class SvgCanvas:
    """Collects SVG elements; coordinates are pixels with the origin at the top left"""

    def __init__(self, width: int = 640, height: int = 400):
        self.width = width
        self.height = height
        self.elements: List[str] = []

    def fill_rect(self, x: float, y: float, w: float, h: float, color: str):
        self.elements.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" fill="{color}"/>')

    def draw_line(self, x1: float, y1: float, x2: float, y2: float, color: str = "#000000", width: float = 1.0):
        self.elements.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                             f'stroke="{color}" stroke-width="{width}"/>')

    def draw_polyline(self, points: Sequence[Tuple[float, float]], color: str, width: float = 2.0):
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        self.elements.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def draw_text(self, x: float, y: float, text: str, size: int = 12, anchor: str = "start",
                  color: str = "#333333", rotate: float = 0.0):
        transform = f' transform="rotate({rotate:.0f} {x:.2f} {y:.2f})"' if rotate else ""
        self.elements.append(f'<text x="{x:.2f}" y="{y:.2f}" font-family="Arial" font-size="{size}" '
                             f'text-anchor="{anchor}" fill="{color}"{transform}>{escape(text)}</text>')

    def to_svg(self) -> str:
        body = "\n  ".join(self.elements)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">\n  {body}\n</svg>\n')

    def save(self, path: str):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_svg())


@dataclass
class Series:
    name: str
    xs: Sequence[float]
    ys: Sequence[float]


class LinePlot:
    """Axes, ticks, a legend and one polyline per series"""

    MARGIN_LEFT = 70
    MARGIN_RIGHT = 20
    MARGIN_TOP = 40
    MARGIN_BOTTOM = 50

    def __init__(self, title: str, xlabel: str, ylabel: str, width: int = 640, height: int = 400):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.canvas = SvgCanvas(width, height)
        self.series: List[Series] = []

    def add_series(self, name: str, xs: Sequence[float], ys: Sequence[float]):
        if len(xs) != len(ys) or len(xs) == 0:
            raise DataError(f"series '{name}' needs equal-length, non-empty x and y values")
        self.series.append(Series(name, [float(x) for x in xs], [float(y) for y in ys]))

    def _bounds(self):
        xs = np.concatenate([s.xs for s in self.series])
        ys = np.concatenate([s.ys for s in self.series])
        x_lo, x_hi = float(xs.min()), float(xs.max())
        y_lo, y_hi = float(min(ys.min(), 0.0)), float(ys.max())
        if x_hi == x_lo:
            x_hi = x_lo + 1.0
        if y_hi == y_lo:
            y_hi = y_lo + 1.0
        return x_lo, x_hi, y_lo, y_hi

    def render(self) -> SvgCanvas:
        if not self.series:
            raise DataError("nothing to plot")
        c = self.canvas
        left, top = self.MARGIN_LEFT, self.MARGIN_TOP
        right, bottom = c.width - self.MARGIN_RIGHT, c.height - self.MARGIN_BOTTOM
        x_lo, x_hi, y_lo, y_hi = self._bounds()

        def to_px(x: float, y: float) -> Tuple[float, float]:
            px = left + (x - x_lo) / (x_hi - x_lo) * (right - left)
            py = bottom - (y - y_lo) / (y_hi - y_lo) * (bottom - top)
            return px, py

        c.fill_rect(0, 0, c.width, c.height, "#FFFFFF")
        c.draw_text(c.width / 2, 24, self.title, size=15, anchor="middle")
        for k in range(5):
            y = y_lo + (y_hi - y_lo) * k / 4
            _, py = to_px(x_lo, y)
            c.draw_line(left, py, right, py, "#E5E5E5")
            c.draw_text(left - 6, py + 4, f"{y:.3g}", size=10, anchor="end")
        for k in range(6):
            x = x_lo + (x_hi - x_lo) * k / 5
            px, _ = to_px(x, y_lo)
            c.draw_text(px, bottom + 16, f"{x:.3g}", size=10, anchor="middle")
        c.draw_line(left, bottom, right, bottom)
        c.draw_line(left, top, left, bottom)
        c.draw_text((left + right) / 2, c.height - 12, self.xlabel, anchor="middle")
        c.draw_text(18, (top + bottom) / 2, self.ylabel, anchor="middle", rotate=-90)

        for i, s in enumerate(self.series):
            color = SERIES_COLORS[i % len(SERIES_COLORS)]
            c.draw_polyline([to_px(x, y) for x, y in zip(s.xs, s.ys)], color)
            c.draw_line(right - 140, top + 10 + 18 * i, right - 115, top + 10 + 18 * i, color, 2.0)
            c.draw_text(right - 108, top + 14 + 18 * i, s.name, size=11)
        return c

    def save(self, path: str):
        self.render().save(path)
