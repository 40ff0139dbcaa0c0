"""Raster containers and connected-component machinery.

All containers wrap read-only numpy arrays in row-major (height, width)
layout and are safe to share across threads. Pixel (x, y) lives at
``data[y, x]``. Label masks use class indices 0=other, 1=epidermis,
2=invasive melanoma.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import ValidationError

CLASS_OTHER = 0
CLASS_EPIDERMIS = 1
CLASS_MELANOMA = 2

_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCTURE_8 = np.ones((3, 3), dtype=bool)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return _STRUCTURE_4
    if connectivity == 8:
        return _STRUCTURE_8
    raise ValidationError(f"connectivity must be 4 or 8, got {connectivity}")


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel class raster; values restricted to {0, 1, 2}."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2:
            raise ValidationError(f"label mask must be 2-D, got shape {a.shape}")
        if not np.issubdtype(a.dtype, np.integer):
            raise ValidationError("label mask requires integer data")
        if a.size and (int(a.min()) < 0 or int(a.max()) > 2):
            bad = int(a.min()) if int(a.min()) < 0 else int(a.max())
            raise ValidationError(f"label mask contains class value {bad} outside {{0,1,2}}")
        object.__setattr__(self, "data", _frozen(a.astype(np.uint8)))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class BinaryMask:
    """Row-major boolean raster."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2:
            raise ValidationError(f"binary mask must be 2-D, got shape {a.shape}")
        object.__setattr__(self, "data", _frozen(a.astype(bool)))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def count(self) -> int:
        return int(self.data.sum())

    @staticmethod
    def zeros(width: int, height: int) -> "BinaryMask":
        return BinaryMask(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True)
class ProbabilityMap:
    """Row-major float32 raster with every value in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2:
            raise ValidationError(f"probability map must be 2-D, got shape {a.shape}")
        a = a.astype(np.float32, copy=False)
        if a.size and not bool(np.all((a >= 0.0) & (a <= 1.0))):
            raise ValidationError("probability map contains values outside [0, 1]")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def same_grid(*rasters) -> tuple[int, int]:
    """Assert all rasters share one (height, width) grid and return it."""
    shapes = {r.shape for r in rasters}
    if len(shapes) != 1:
        raise ValidationError(f"grid size mismatch: {sorted(shapes)}")
    return shapes.pop()


@dataclass(frozen=True)
class ComponentSet:
    """Deterministic component labeling of a binary mask.

    Component ids run 1..count with no gaps, assigned in raster-scan order
    of each component's first pixel. Per-component pixels are stored as
    row run-length spans ``(y, x0, x1)`` with half-open columns, which keeps
    memory linear in boundary length rather than area.
    """

    labels: np.ndarray
    count: int
    connectivity: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @cached_property
    def areas(self) -> np.ndarray:
        """Pixel counts indexed by component id (index 0 is background)."""
        return np.bincount(self.labels.ravel(), minlength=self.count + 1)

    @cached_property
    def _span_table(self) -> tuple[np.ndarray, np.ndarray]:
        """All spans (n, 3) grouped by id, plus per-id offsets (count+2,)."""
        h, w = self.labels.shape
        # Sentinel column forces every run to stop at its row end.
        padded = np.empty((h, w + 1), dtype=np.int64)
        padded[:, :w] = self.labels
        padded[:, w] = -1
        flat = padded.ravel()
        change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        starts = np.concatenate(([0], change))
        ends = np.concatenate((change, [flat.size]))
        vals = flat[starts]
        keep = vals > 0
        starts, ends, vals = starts[keep], ends[keep], vals[keep]
        spans = np.empty((starts.size, 3), dtype=np.int64)
        spans[:, 0] = starts // (w + 1)
        spans[:, 1] = starts % (w + 1)
        spans[:, 2] = spans[:, 1] + (ends - starts)
        order = np.argsort(vals, kind="stable")
        spans = spans[order]
        offsets = np.searchsorted(vals[order], np.arange(self.count + 2))
        return spans, offsets

    def spans(self, comp_id: int) -> np.ndarray:
        """Row spans (k, 3) of one component in raster order."""
        self._check_id(comp_id)
        spans, offsets = self._span_table
        return spans[offsets[comp_id]:offsets[comp_id + 1]]

    def pixels(self, comp_id: int) -> tuple[np.ndarray, np.ndarray]:
        """Materialize (ys, xs) pixel coordinates of one component."""
        sp = self.spans(comp_id)
        lengths = sp[:, 2] - sp[:, 1]
        ys = np.repeat(sp[:, 0], lengths)
        offs = np.arange(int(lengths.sum())) - np.repeat(
            np.concatenate(([0], np.cumsum(lengths[:-1]))), lengths
        )
        xs = np.repeat(sp[:, 1], lengths) + offs
        return ys, xs

    def bbox(self, comp_id: int) -> tuple[int, int, int, int]:
        """(x0, y0, x1, y1) half-open bounding box of one component."""
        sp = self.spans(comp_id)
        return (
            int(sp[:, 1].min()),
            int(sp[0, 0]),
            int(sp[:, 2].max()),
            int(sp[-1, 0]) + 1,
        )

    def area(self, comp_id: int) -> int:
        self._check_id(comp_id)
        return int(self.areas[comp_id])

    def contains(self, comp_id: int, x: int, y: int) -> bool:
        h, w = self.labels.shape
        if not (0 <= x < w and 0 <= y < h):
            return False
        return int(self.labels[y, x]) == comp_id

    def mask(self, comp_id: int) -> BinaryMask:
        self._check_id(comp_id)
        return BinaryMask(self.labels == comp_id)

    def ids(self) -> range:
        return range(1, self.count + 1)

    def _check_id(self, comp_id: int) -> None:
        if not (1 <= comp_id <= self.count):
            raise ValidationError(f"component id {comp_id} outside 1..{self.count}")


def class_plane(mask: LabelMask, class_id: int) -> BinaryMask:
    """Binary support of one class of a label mask."""
    if class_id not in (1, 2):
        raise ValidationError(f"class_id must be 1 or 2, got {class_id}")
    return BinaryMask(mask.data == class_id)


def connected_components(mask: BinaryMask, connectivity: int = 8) -> ComponentSet:
    """Label a binary mask; ids follow raster order of first-encountered pixels."""
    raw, n = ndimage.label(mask.data, structure=_structure(connectivity))
    if n == 0:
        return ComponentSet(_frozen(raw.astype(np.int32)), 0, connectivity)
    # ndimage's id order is an implementation detail; pin ids to the raster
    # order of each component's first pixel.
    vals, first = np.unique(raw, return_index=True)
    nz = vals > 0
    vals, first = vals[nz], first[nz]
    perm = np.zeros(n + 1, dtype=np.int32)
    perm[vals[np.argsort(first)]] = np.arange(1, n + 1, dtype=np.int32)
    return ComponentSet(_frozen(perm[raw]), n, connectivity)


@dataclass(frozen=True)
class TouchReport:
    """Which components of the other raster are adjacent to a component."""

    touched: bool
    touched_ids: tuple[int, ...]
    touched_areas: tuple[int, ...] = field(default=())


def touches(
    components: ComponentSet,
    comp_id: int,
    other: BinaryMask | ComponentSet,
    connectivity: int = 8,
) -> TouchReport:
    """Test whether a component has a 4/8-neighbor pixel set in `other`.

    Returns the ids (and areas) of every touched component of `other`.
    """
    if isinstance(other, BinaryMask):
        other = connected_components(other, connectivity)
    if components.shape != other.shape:
        raise ValidationError(
            f"grid size mismatch: {components.shape} vs {other.shape}"
        )
    x0, y0, x1, y1 = components.bbox(comp_id)
    h, w = components.shape
    x0, y0 = max(x0 - 1, 0), max(y0 - 1, 0)
    x1, y1 = min(x1 + 1, w), min(y1 + 1, h)
    window = (slice(y0, y1), slice(x0, x1))
    sub = components.labels[window] == comp_id
    # Structure without the origin: the dilation is exactly the union of
    # the pixels' neighbor cells, not the component itself.
    struct = _structure(connectivity).copy()
    struct[1, 1] = False
    neighbors = ndimage.binary_dilation(sub, structure=struct)
    ids = np.unique(other.labels[window][neighbors])
    ids = tuple(int(i) for i in ids if i > 0)
    areas = tuple(other.area(i) for i in ids)
    return TouchReport(bool(ids), ids, areas)
