"""Component geometry: centroid, axis-aligned box, minimum-area box.

The minimum-area box is computed on the convex hull of the pixel *corner*
points (each pixel (x, y) contributes corners (x, y)..(x+1, y+1)), so a
1-pixel-wide streak still yields a box with unit short side. Because the
top row and leftmost column always contribute axis-parallel hull edges,
the axis-aligned orientation is always among the caliper candidates and
the minimum-area box can never beat the AABB by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .raster import ComponentSet


@dataclass(frozen=True)
class Centroid:
    """Unweighted mean of pixel centers, plus membership of its rounding."""

    x: float
    y: float
    inside: bool


@dataclass(frozen=True)
class MinAreaBox:
    """Short side, long side, and caliper angle (radians in [0, pi/2))."""

    w_m: float
    h_m: float
    angle: float

    @property
    def area(self) -> float:
        return self.w_m * self.h_m

    @property
    def aspect(self) -> float:
        return self.h_m / self.w_m


@dataclass(frozen=True)
class BoxDims:
    """AABB sides (pixel-count convention) and min-area box sides (short, long)."""

    w_s: int
    h_s: int
    w_m: float
    h_m: float

    def __post_init__(self):
        if not (self.h_m >= self.w_m > 0):
            raise ValidationError(f"degenerate min-area box {self.w_m}x{self.h_m}")
        if self.w_m * self.h_m > self.w_s * self.h_s * (1 + 1e-9) + 1e-9:
            raise ValidationError("min-area box larger than AABB")


def round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def centroid(components: ComponentSet, comp_id: int) -> Centroid:
    """Mean of pixel centers; `inside` tests the half-up rounded pixel."""
    sp = components.spans(comp_id)
    lengths = sp[:, 2] - sp[:, 1]
    area = int(lengths.sum())
    # Sum over x0..x1-1 per span stays exact in int64.
    sum_x = int((lengths * (sp[:, 1] + sp[:, 2] - 1) // 2).sum())
    sum_y = int((lengths * sp[:, 0]).sum())
    cx = sum_x / area
    cy = sum_y / area
    inside = components.contains(comp_id, round_half_up(cx), round_half_up(cy))
    return Centroid(cx, cy, inside)


def aabb(components: ComponentSet, comp_id: int) -> tuple[int, int]:
    """(w_s, h_s) with the inclusive pixel-count convention (1 pixel -> 1x1)."""
    x0, y0, x1, y1 = components.bbox(comp_id)
    return x1 - x0, y1 - y0


def corner_points(components: ComponentSet, comp_id: int) -> np.ndarray:
    """Hull candidates: corner points of each row's extreme pixels, (n, 2) int."""
    sp = components.spans(comp_id)
    ys = sp[:, 0]
    row_starts = np.flatnonzero(np.concatenate(([True], ys[1:] != ys[:-1])))
    row_y = ys[row_starts]
    min_x0 = np.minimum.reduceat(sp[:, 1], row_starts)
    max_x1 = np.maximum.reduceat(sp[:, 2], row_starts)
    xs = np.concatenate([min_x0, min_x0, max_x1, max_x1])
    yy = np.concatenate([row_y, row_y + 1, row_y, row_y + 1])
    return np.stack([xs, yy], axis=1)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull; returns vertices without repeats."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts

    def build(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2:
                ax, ay = out[-2]
                bx, by = out[-1]
                if (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = build(pts)
    upper = build(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def min_area_bbox(components: ComponentSet, comp_id: int) -> MinAreaBox:
    """Minimum-area enclosing rectangle of the pixel-corner hull.

    The optimal rectangle shares a direction with some hull edge, so only
    edge angles (mod pi/2) are evaluated.
    """
    hull = convex_hull(corner_points(components, comp_id))
    edges = np.diff(np.vstack([hull, hull[:1]]), axis=0)
    angles = np.unique(np.mod(np.arctan2(edges[:, 1], edges[:, 0]), np.pi / 2))
    cos, sin = np.cos(angles), np.sin(angles)
    xr = np.outer(cos, hull[:, 0]) + np.outer(sin, hull[:, 1])
    yr = -np.outer(sin, hull[:, 0]) + np.outer(cos, hull[:, 1])
    wz = xr.max(axis=1) - xr.min(axis=1)
    hz = yr.max(axis=1) - yr.min(axis=1)
    best = int(np.argmin(wz * hz))
    w, h = float(wz[best]), float(hz[best])
    return MinAreaBox(min(w, h), max(w, h), float(angles[best]))


def box_dims(components: ComponentSet, comp_id: int) -> BoxDims:
    w_s, h_s = aabb(components, comp_id)
    box = min_area_bbox(components, comp_id)
    return BoxDims(w_s, h_s, box.w_m, box.h_m)
