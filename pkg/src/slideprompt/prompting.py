"""Per-component prompt planning: centroid vs grid dispatch and point lists.

A component is grid-class when its AABB exceeds the patch side in either
dimension or its min-area-box aspect ratio exceeds alpha_b (all strict).
Grid-class components get lattice points (slide-anchored, every grid_gap
pixels) plus their centroid when it lies inside. If any grid-class
component covers more than escalation_fraction of the patch area, the
whole slide escalates to grid prompts.

Plan text schema: a header line "# slide_escalated<TAB>0|1", then one
tab-separated line per point: component_id, mode, x, y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import box_dims, centroid, round_half_up
from .raster import BinaryMask, ComponentSet, connected_components

MODE_CENTROID = "centroid"
MODE_GRID = "grid"
MODE_GRID_CENTROID = "grid+centroid"


@dataclass(frozen=True)
class PromptConfig:
    patch_side: int = 512
    alpha_b: float = 3.0
    grid_gap: int = 64
    escalation_fraction: float = 0.25
    # Emit the rounded centroid even when it falls outside the component
    # (the literal dispatch rule). Off by default: the package substitutes
    # the nearest in-component pixel and flags the component instead, so
    # every emitted point is guaranteed to lie on the mask.
    strict_centroid: bool = False

    def __post_init__(self):
        if self.patch_side <= 0:
            raise ValidationError(f"patch_side must be positive, got {self.patch_side}")
        if self.alpha_b < 1.0:
            raise ValidationError(f"alpha_b must be >= 1, got {self.alpha_b}")
        if not 0 < self.grid_gap <= self.patch_side:
            raise ValidationError(
                f"grid_gap must be in (0, patch_side], got {self.grid_gap}"
            )
        if self.escalation_fraction <= 0:
            raise ValidationError("escalation_fraction must be positive")


@dataclass(frozen=True)
class ComponentPrompt:
    component_id: int
    mode: str
    points: tuple[tuple[int, int], ...]
    centroid_outside: bool = False


@dataclass(frozen=True)
class PromptPlan:
    prompts: tuple[ComponentPrompt, ...] = field(default=())
    slide_escalated: bool = False

    def point_count(self) -> int:
        return sum(len(p.points) for p in self.prompts)

    def to_text(self) -> str:
        lines = [f"# slide_escalated\t{int(self.slide_escalated)}"]
        for p in self.prompts:
            for x, y in p.points:
                lines.append(f"{p.component_id}\t{p.mode}\t{x}\t{y}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "PromptPlan":
        escalated = False
        rows: dict[int, tuple[str, list[tuple[int, int]]]] = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            if line.startswith("#"):
                parts = line.split("\t")
                if len(parts) == 2 and parts[0] == "# slide_escalated":
                    escalated = bool(int(parts[1]))
                continue
            cid_s, mode, x_s, y_s = line.split("\t")
            cid = int(cid_s)
            if cid not in rows:
                rows[cid] = (mode, [])
            rows[cid][1].append((int(x_s), int(y_s)))
        prompts = tuple(
            ComponentPrompt(cid, mode, tuple(pts))
            for cid, (mode, pts) in sorted(rows.items())
        )
        return PromptPlan(prompts, escalated)


def decide_mode(components: ComponentSet, comp_id: int, cfg: PromptConfig) -> str:
    """Dispatch one component to centroid, grid, or grid+centroid prompts."""
    if _is_grid_class(components, comp_id, cfg):
        inside = centroid(components, comp_id).inside
        return MODE_GRID_CENTROID if inside else MODE_GRID
    return MODE_CENTROID


def _is_grid_class(components: ComponentSet, comp_id: int, cfg: PromptConfig) -> bool:
    dims = box_dims(components, comp_id)
    return (
        dims.w_s > cfg.patch_side
        or dims.h_s > cfg.patch_side
        or dims.h_m / dims.w_m > cfg.alpha_b
    )


def grid_points(
    components: ComponentSet, comp_id: int, cfg: PromptConfig
) -> list[tuple[int, int]]:
    """Slide-anchored lattice points on the component, or one fallback point.

    The lattice is {(i*gap, j*gap)}; anchoring at the slide origin keeps
    plans translation-consistent for shifts by multiples of the gap. When
    no lattice site hits the component, the pixel nearest its centroid is
    returned so every component still yields a prompt.
    """
    gap = cfg.grid_gap
    points: list[tuple[int, int]] = []
    for y, x0, x1 in components.spans(comp_id):
        if y % gap:
            continue
        first = -(-x0 // gap) * gap
        points.extend((int(x), int(y)) for x in range(first, x1, gap))
    if points:
        return points
    return [nearest_pixel_to_centroid(components, comp_id)]


def nearest_pixel_to_centroid(components: ComponentSet, comp_id: int) -> tuple[int, int]:
    """Component pixel minimizing distance to the centroid; raster-order ties."""
    c = centroid(components, comp_id)
    sp = components.spans(comp_id)
    best_x = np.clip(round_half_up(c.x), sp[:, 1], sp[:, 2] - 1)
    d2 = (best_x - c.x) ** 2 + (sp[:, 0] - c.y) ** 2
    pick = np.lexsort((best_x, sp[:, 0], d2))[0]
    return int(best_x[pick]), int(sp[pick, 0])


def plan_prompts(
    mask: BinaryMask, cfg: PromptConfig, connectivity: int = 8
) -> PromptPlan:
    """Component-wise prompt plan with the slide-level grid escalation rule."""
    components = connected_components(mask, connectivity)
    grid_class = {i: _is_grid_class(components, i, cfg) for i in components.ids()}
    area_cap = cfg.escalation_fraction * cfg.patch_side**2
    escalated = any(
        grid_class[i] and components.area(i) > area_cap for i in components.ids()
    )

    prompts = []
    for i in components.ids():
        cen = centroid(components, i)
        use_grid = escalated or grid_class[i]
        if use_grid:
            mode = MODE_GRID_CENTROID if cen.inside else MODE_GRID
            points = grid_points(components, i, cfg)
            if cen.inside:
                supplement = (round_half_up(cen.x), round_half_up(cen.y))
                if supplement not in points:
                    points.append(supplement)
            prompts.append(ComponentPrompt(i, mode, tuple(points)))
        else:
            rounded = (round_half_up(cen.x), round_half_up(cen.y))
            if cen.inside:
                prompts.append(ComponentPrompt(i, MODE_CENTROID, (rounded,)))
            elif cfg.strict_centroid:
                prompts.append(ComponentPrompt(i, MODE_CENTROID, (rounded,), True))
            else:
                point = nearest_pixel_to_centroid(components, i)
                prompts.append(ComponentPrompt(i, MODE_CENTROID, (point,), True))
    return PromptPlan(tuple(prompts), escalated)
