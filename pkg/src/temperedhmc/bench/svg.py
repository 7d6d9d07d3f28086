"""Dependency-free SVG emission for trace and trajectory plots.

Only the handful of primitives the bench plots need: polylines, circles,
cross markers, text, axes.  Data coordinates are mapped into a fixed
canvas with margins; callers pass data-space geometry and a Frame does the
projection.  Output is a single well-formed <svg> element.
"""

from __future__ import annotations

import dataclasses
from xml.sax.saxutils import escape


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


@dataclasses.dataclass(frozen=True)
class Frame:
    """Affine map from data space to canvas pixels (y flipped)."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    width: float = 640.0
    height: float = 420.0
    margin: float = 46.0

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("frame extents must be nonempty")

    def x(self, vx: float) -> float:
        span = self.x_max - self.x_min
        inner = self.width - 2 * self.margin
        return self.margin + (vx - self.x_min) / span * inner

    def y(self, vy: float) -> float:
        span = self.y_max - self.y_min
        inner = self.height - 2 * self.margin
        return self.height - self.margin - (vy - self.y_min) / span * inner

    def point(self, vx: float, vy: float) -> tuple[float, float]:
        return self.x(vx), self.y(vy)


def polyline(frame: Frame, xs, ys, color: str, width: float = 1.2, opacity: float = 1.0):
    pts = " ".join(
        f"{_fmt(frame.x(x))},{_fmt(frame.y(y))}" for x, y in zip(xs, ys)
    )
    return (
        f'<polyline fill="none" stroke="{color}" stroke-width="{_fmt(width)}" '
        f'stroke-opacity="{_fmt(opacity)}" points="{pts}"/>'
    )


def circle(frame: Frame, cx, cy, r_px: float, color: str, fill: str = "none"):
    x, y = frame.point(cx, cy)
    return (
        f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r_px)}" '
        f'stroke="{color}" fill="{fill}"/>'
    )


def cross(frame: Frame, cx, cy, half_px: float, color: str):
    """Asterisk-style marker at a data point."""
    x, y = frame.point(cx, cy)
    h = half_px
    return (
        f'<path stroke="{color}" stroke-width="1.1" d="'
        f"M {_fmt(x - h)} {_fmt(y)} L {_fmt(x + h)} {_fmt(y)} "
        f"M {_fmt(x)} {_fmt(y - h)} L {_fmt(x)} {_fmt(y + h)} "
        f"M {_fmt(x - 0.7 * h)} {_fmt(y - 0.7 * h)} L {_fmt(x + 0.7 * h)} {_fmt(y + 0.7 * h)} "
        f"M {_fmt(x - 0.7 * h)} {_fmt(y + 0.7 * h)} L {_fmt(x + 0.7 * h)} {_fmt(y - 0.7 * h)}"
        f'"/>'
    )


def text(x_px: float, y_px: float, content: str, size: int = 12, anchor: str = "start"):
    return (
        f'<text x="{_fmt(x_px)}" y="{_fmt(y_px)}" font-size="{size}" '
        f'font-family="sans-serif" text-anchor="{anchor}">{escape(content)}</text>'
    )


def axes(frame: Frame, x_label: str, y_label: str):
    """Plot border with min/max tick labels on both axes."""
    x0, y0 = frame.margin, frame.height - frame.margin
    x1, y1 = frame.width - frame.margin, frame.margin
    parts = [
        f'<rect x="{_fmt(x0)}" y="{_fmt(y1)}" width="{_fmt(x1 - x0)}" '
        f'height="{_fmt(y0 - y1)}" fill="none" stroke="#444"/>',
        text(x0, y0 + 16, _fmt(frame.x_min), anchor="middle"),
        text(x1, y0 + 16, _fmt(frame.x_max), anchor="middle"),
        text(x0 - 6, y0 + 4, _fmt(frame.y_min), anchor="end"),
        text(x0 - 6, y1 + 4, _fmt(frame.y_max), anchor="end"),
        text((x0 + x1) / 2, y0 + 32, x_label, anchor="middle"),
        text(12, (y0 + y1) / 2, y_label, anchor="middle"),
    ]
    return "\n".join(parts)


def document(elements, width: float = 640.0, height: float = 420.0) -> str:
    body = "\n".join(elements)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">\n'
        f'<rect width="100%" height="100%" fill="white"/>\n'
        f"{body}\n</svg>\n"
    )
