"""Initial-mask refinement: split melanoma components into estimated
in-situ candidates vs invasive remainder, drop low-confidence candidates,
and emit the refined binary melanoma mask plus an audit report.

Decision rules per component i of the melanoma plane:
  * in-situ candidate iff it touches >=1 epidermis component AND
    area_i / area(largest touched epidermis component) < alpha_m (strict);
  * a candidate is kept iff |{x in i : P(x) > beta}| / area_i >= alpha_c,
    with both comparisons evaluated in float32.

Report lines are tab-separated with columns (in this order):
  component_id  area  classification  epidermis_ratio  confidence_ratio  touched
where classification is one of invasive / estimated-in-situ-kept /
estimated-in-situ-dropped, ratios are repr'd floats or "-", and touched
is a comma-joined list of id:area pairs ("-" when nothing is touched).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .raster import (
    CLASS_EPIDERMIS,
    CLASS_MELANOMA,
    BinaryMask,
    ComponentSet,
    LabelMask,
    ProbabilityMap,
    class_plane,
    connected_components,
    same_grid,
    touches,
)

CLASSIFIED_INVASIVE = "invasive"
CLASSIFIED_KEPT = "estimated-in-situ-kept"
CLASSIFIED_DROPPED = "estimated-in-situ-dropped"


@dataclass(frozen=True)
class PostprocessConfig:
    alpha_m: float = 0.1
    beta: float = 0.8
    alpha_c: float = 0.4
    connectivity: int = 8

    def __post_init__(self):
        # alpha_m = 0 is allowed as the documented "detection off" setting.
        if not 0.0 <= self.alpha_m < 1.0:
            raise ValidationError(f"alpha_m must be in [0, 1), got {self.alpha_m}")
        if not 0.0 < self.beta < 1.0:
            raise ValidationError(f"beta must be in (0, 1), got {self.beta}")
        if not 0.0 <= self.alpha_c <= 1.0:
            raise ValidationError(f"alpha_c must be in [0, 1], got {self.alpha_c}")
        if self.connectivity not in (4, 8):
            raise ValidationError(f"connectivity must be 4 or 8, got {self.connectivity}")


@dataclass(frozen=True)
class ComponentDecision:
    component_id: int
    area: int
    touched_ids: tuple[int, ...]
    touched_areas: tuple[int, ...]
    epidermis_ratio: float | None
    classified: str
    confidence_ratio: float | None


@dataclass(frozen=True)
class PostprocessReport:
    decisions: tuple[ComponentDecision, ...] = field(default=())

    def counts(self) -> dict[str, int]:
        out = {CLASSIFIED_INVASIVE: 0, CLASSIFIED_KEPT: 0, CLASSIFIED_DROPPED: 0}
        for d in self.decisions:
            out[d.classified] += 1
        return out

    def to_text(self) -> str:
        lines = []
        for d in self.decisions:
            ratio = "-" if d.epidermis_ratio is None else repr(d.epidermis_ratio)
            conf = "-" if d.confidence_ratio is None else repr(d.confidence_ratio)
            touched = (
                ",".join(f"{i}:{a}" for i, a in zip(d.touched_ids, d.touched_areas))
                or "-"
            )
            lines.append(
                f"{d.component_id}\t{d.area}\t{d.classified}\t{ratio}\t{conf}\t{touched}"
            )
        return "\n".join(lines) + ("\n" if lines else "")


def detect_in_situ(
    melanoma: ComponentSet,
    epidermis: BinaryMask | ComponentSet,
    cfg: PostprocessConfig,
) -> tuple[set[int], set[int], dict[int, "ComponentDecision"]]:
    """Partition melanoma component ids into (in-situ candidates, invasive).

    Also returns per-component partial decisions carrying the touch audit.
    When several epidermis components are touched the ratio uses the
    largest one (ties broken by smallest id).
    """
    if isinstance(epidermis, BinaryMask):
        epidermis = connected_components(epidermis, cfg.connectivity)
    if melanoma.shape != epidermis.shape:
        raise ValidationError(f"grid size mismatch: {melanoma.shape} vs {epidermis.shape}")
    in_situ: set[int] = set()
    invasive: set[int] = set()
    partial: dict[int, ComponentDecision] = {}
    for i in melanoma.ids():
        report = touches(melanoma, i, epidermis, cfg.connectivity)
        area = melanoma.area(i)
        ratio = None
        if report.touched:
            biggest = max(report.touched_areas)
            ratio = area / biggest
        if ratio is not None and ratio < cfg.alpha_m:
            in_situ.add(i)
            classified = CLASSIFIED_KEPT  # provisional until confidence filtering
        else:
            invasive.add(i)
            classified = CLASSIFIED_INVASIVE
        partial[i] = ComponentDecision(
            component_id=i,
            area=area,
            touched_ids=report.touched_ids,
            touched_areas=report.touched_areas,
            epidermis_ratio=ratio,
            classified=classified,
            confidence_ratio=None,
        )
    return in_situ, invasive, partial


def confidence_ratio(
    melanoma: ComponentSet, comp_id: int, probmap: ProbabilityMap, beta: float
) -> float:
    """Fraction of the component's pixels whose probability strictly exceeds beta.

    Compared in float32 so "exactly equal to beta" is well defined for
    data loaded from PFM files.
    """
    ys, xs = melanoma.pixels(comp_id)
    high = int(np.count_nonzero(probmap.data[ys, xs] > np.float32(beta)))
    return high / melanoma.area(comp_id)


def confidence_filter(
    melanoma: ComponentSet,
    candidate_ids: set[int],
    probmap: ProbabilityMap,
    cfg: PostprocessConfig,
) -> tuple[set[int], dict[int, float]]:
    """Keep candidates whose high-confidence fraction reaches alpha_c."""
    if melanoma.shape != probmap.shape:
        raise ValidationError(f"grid size mismatch: {melanoma.shape} vs {probmap.shape}")
    kept: set[int] = set()
    ratios: dict[int, float] = {}
    for i in sorted(candidate_ids):
        ratio = confidence_ratio(melanoma, i, probmap, cfg.beta)
        ratios[i] = ratio
        if ratio >= cfg.alpha_c:
            kept.add(i)
    return kept, ratios


def postprocess_mask(
    mask: LabelMask,
    probmap: ProbabilityMap,
    cfg: PostprocessConfig = PostprocessConfig(),
) -> tuple[BinaryMask, PostprocessReport]:
    """Refined melanoma mask: invasive components plus kept in-situ candidates."""
    same_grid(mask, probmap)
    melanoma = connected_components(class_plane(mask, CLASS_MELANOMA), cfg.connectivity)
    epidermis = connected_components(class_plane(mask, CLASS_EPIDERMIS), cfg.connectivity)
    in_situ, invasive, partial = detect_in_situ(melanoma, epidermis, cfg)
    kept, ratios = confidence_filter(melanoma, in_situ, probmap, cfg)

    keep_ids = invasive | kept
    out = np.zeros(mask.shape, dtype=bool)
    for i in keep_ids:
        ys, xs = melanoma.pixels(i)
        out[ys, xs] = True

    decisions = []
    for i in melanoma.ids():
        d = partial[i]
        if i in in_situ:
            classified = CLASSIFIED_KEPT if i in kept else CLASSIFIED_DROPPED
            d = ComponentDecision(
                component_id=d.component_id,
                area=d.area,
                touched_ids=d.touched_ids,
                touched_areas=d.touched_areas,
                epidermis_ratio=d.epidermis_ratio,
                classified=classified,
                confidence_ratio=ratios[i],
            )
        decisions.append(d)
    return BinaryMask(out), PostprocessReport(tuple(decisions))
