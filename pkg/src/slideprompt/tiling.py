"""Patch geometry: prompt-centered windows, sliding-window tiling, and
Gaussian-weighted stitching of overlapping patch probability maps.

Windows are always fully inside the slide; prompt-centered windows shift
(clamp) at borders instead of padding, so a backend never sees synthetic
pixels. Stitching accumulates in float64 and emits float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .raster import LabelMask, ProbabilityMap


@dataclass(frozen=True)
class PatchWindow:
    """Axis-aligned window (w = h = side except degenerate clamped tiles)."""

    x0: int
    y0: int
    width: int
    height: int
    prompt_local: tuple[int, int] | None = None

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y0 + self.height), slice(self.x0, self.x0 + self.width)


def centered_window(
    point: tuple[int, int], side: int, slide_w: int, slide_h: int
) -> PatchWindow:
    """Window of `side` centered at `point`, shifted to stay inside the slide."""
    x, y = point
    if side > slide_w or side > slide_h:
        raise ValidationError(
            f"patch side {side} exceeds slide {slide_w}x{slide_h}; "
            "pad the slide to the patch side first (pad mode)"
        )
    if not (0 <= x < slide_w and 0 <= y < slide_h):
        raise ValidationError(f"point {point} outside slide {slide_w}x{slide_h}")
    x0 = min(max(x - side // 2, 0), slide_w - side)
    y0 = min(max(y - side // 2, 0), slide_h - side)
    return PatchWindow(x0, y0, side, side, prompt_local=(x - x0, y - y0))


def gaussian_kernel(side: int) -> np.ndarray:
    """Isotropic Gaussian weights, sigma = side/4, centered on the patch.

    Normalized so the pixel(s) nearest the continuous center carry weight
    exactly 1; all weights are strictly positive.
    """
    if side <= 0:
        raise ValidationError(f"side must be positive, got {side}")
    sigma = side / 4.0
    c = (side - 1) / 2.0
    r = np.arange(side, dtype=np.float64) - c
    kernel = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2.0 * sigma**2))
    return kernel / kernel.max()


def sliding_windows(
    slide_w: int, slide_h: int, side: int, stride: int
) -> list[PatchWindow]:
    """Stride-spaced windows covering every pixel; final windows clamp to the edge."""
    if stride <= 0:
        raise ValidationError(f"stride must be positive, got {stride}")

    def axis_origins(dim: int, length: int) -> list[int]:
        if length >= dim:
            return [0]
        origins = list(range(0, dim - length + 1, stride))
        if origins[-1] != dim - length:
            origins.append(dim - length)
        return origins

    w = min(side, slide_w)
    h = min(side, slide_h)
    return [
        PatchWindow(x0, y0, w, h)
        for y0 in axis_origins(slide_h, h)
        for x0 in axis_origins(slide_w, w)
    ]


class StitchAccumulator:
    """Per-pixel weighted sums for Gaussian-blended patch probabilities."""

    def __init__(self, slide_w: int, slide_h: int):
        self._num = np.zeros((slide_h, slide_w), dtype=np.float64)
        self._den = np.zeros((slide_h, slide_w), dtype=np.float64)

    def add(self, window: PatchWindow, patch_probs: np.ndarray, kernel: np.ndarray) -> None:
        if patch_probs.shape != (window.height, window.width):
            raise ValidationError(
                f"patch shape {patch_probs.shape} does not match window "
                f"{window.height}x{window.width}"
            )
        if kernel.shape != patch_probs.shape:
            raise ValidationError("kernel shape must match the patch shape")
        ys, xs = window.slices
        self._num[ys, xs] += kernel * patch_probs
        self._den[ys, xs] += kernel

    def finalize(self) -> ProbabilityMap:
        if not bool(np.all(self._den > 0)):
            uncovered = int(np.count_nonzero(self._den == 0))
            raise ValidationError(f"stitch coverage violated: {uncovered} pixels unweighted")
        out = (self._num / self._den).astype(np.float32)
        return ProbabilityMap(np.clip(out, 0.0, 1.0))


def dataset_patches(
    mask: LabelMask, side: int, background_fraction_max: float = 0.97
) -> list[PatchWindow]:
    """Non-overlapping full tiles, discarding near-background ones.

    Tiles whose class-0 fraction reaches `background_fraction_max` are
    dropped. Remainder rows/columns that cannot form a full tile are not
    emitted.
    """
    if side <= 0:
        raise ValidationError(f"side must be positive, got {side}")
    h, w = mask.shape
    ny, nx = h // side, w // side
    if ny == 0 or nx == 0:
        return []
    bg = (mask.data[: ny * side, : nx * side] == 0).astype(np.float64)
    frac = bg.reshape(ny, side, nx, side).mean(axis=(1, 3))
    keep = np.argwhere(frac < background_fraction_max)
    return [PatchWindow(int(tx * side), int(ty * side), side, side) for ty, tx in keep]
