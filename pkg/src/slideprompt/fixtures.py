"""Synthetic slides and prompt-dataset tooling.

Everything here is reproducible bit-for-bit across platforms: the only
randomness source is SplitMix64 (documented below), all placement is in
integer coordinates, and shapes rasterize by exact pixel-center tests.

Preset slides ship three rasters: a ground-truth label mask, a simulated
initial mask (ground truth plus optional "confuser" melanoma components
that touch the epidermis), and a probability map whose melanoma pixels
follow each component recipe's high-confidence fraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .raster import CLASS_MELANOMA, BinaryMask, ComponentSet, LabelMask, ProbabilityMap, class_plane, connected_components
from .tiling import centered_window

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Counter-based 64-bit generator (xorshift-multiply finalizer).

    Output i is mix(seed + (i+1) * 0x9E3779B97F4A7C15 mod 2^64) where
    mix(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
            z *= 0x94D049BB133111EB; z ^= z >> 31.
    Counter-based means block generation is vectorizable while emitting
    the exact same stream as the scalar path, and any language with 64-bit
    integers reproduces it.
    """

    def __init__(self, seed: int):
        self._seed = seed & _MASK64
        self._counter = 0

    @staticmethod
    def _mix(z: int) -> int:
        z ^= z >> 30
        z = (z * _MIX1) & _MASK64
        z ^= z >> 27
        z = (z * _MIX2) & _MASK64
        z ^= z >> 31
        return z

    def next_u64(self) -> int:
        self._counter += 1
        return self._mix((self._seed + self._counter * _GAMMA) & _MASK64)

    def next_block(self, n: int) -> np.ndarray:
        """Next n outputs as uint64, identical to n scalar next_u64 calls."""
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            z = idx * np.uint64(_GAMMA) + np.uint64(self._seed)
            z ^= z >> np.uint64(30)
            z = z * np.uint64(_MIX1)
            z ^= z >> np.uint64(27)
            z = z * np.uint64(_MIX2)
            z ^= z >> np.uint64(31)
        return z

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_block(self, n: int) -> np.ndarray:
        return (self.next_block(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def randrange(self, n: int) -> int:
        """Integer in [0, n) as next_u64() % n (documented modulo reduction)."""
        if n <= 0:
            raise ValidationError(f"randrange needs n > 0, got {n}")
        return self.next_u64() % n


@dataclass(frozen=True)
class ComponentRecipe:
    """One synthetic tissue component.

    size semantics by shape: blob -> (rx, ry) ellipse radii; bar ->
    (length, thickness) before rotation; ring -> (outer_r, inner_r).
    prob_high is the fraction of this component's pixels drawn above the
    0.8 confidence level in the probability map. Confuser components
    appear only in the simulated initial mask, not in the ground truth.
    """

    shape: str
    cls: int
    center: tuple[int, int]
    size: tuple[float, float]
    angle_deg: float = 0.0
    prob_high: float = 1.0
    confuser: bool = False

    def __post_init__(self):
        if self.shape not in ("blob", "bar", "ring"):
            raise ValidationError(f"unknown shape {self.shape!r}")
        if self.cls not in (1, 2):
            raise ValidationError(f"recipe class must be 1 or 2, got {self.cls}")
        if not 0.0 <= self.prob_high <= 1.0:
            raise ValidationError(f"prob_high must be in [0, 1], got {self.prob_high}")


@dataclass(frozen=True)
class SynthSpec:
    seed: int
    width: int
    height: int
    recipes: tuple[ComponentRecipe, ...] = field(default=())


def _rasterize(recipe: ComponentRecipe, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel (ys, xs) of the recipe's support; errors if it leaves the slide."""
    cx, cy = recipe.center
    a, b = recipe.size
    if recipe.shape == "bar":
        radius = int(np.ceil(np.hypot(a, b) / 2.0)) + 1
    else:
        radius = int(np.ceil(max(a, b))) + 1
    x_lo, x_hi = cx - radius, cx + radius + 1
    y_lo, y_hi = cy - radius, cy + radius + 1
    xs = np.arange(x_lo, x_hi)
    ys = np.arange(y_lo, y_hi)
    dx = xs[None, :] - cx
    dy = ys[:, None] - cy
    theta = np.deg2rad(recipe.angle_deg)
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    if recipe.shape == "blob":
        hit = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    elif recipe.shape == "bar":
        hit = (np.abs(u) <= a / 2.0) & (np.abs(v) <= b / 2.0)
    else:
        r2 = dx**2 + dy**2
        hit = (r2 <= a**2) & (r2 > b**2)
    yy, xx = np.nonzero(hit)
    px = xs[xx]
    py = ys[yy]
    if px.size == 0:
        raise ValidationError(f"recipe rasterizes to nothing: {recipe}")
    if px.min() < 0 or py.min() < 0 or px.max() >= width or py.max() >= height:
        raise ValidationError(
            f"recipe exceeds slide bounds ({width}x{height}): {recipe}"
        )
    return py, px


def synth_slide(spec: SynthSpec) -> tuple[LabelMask, LabelMask, ProbabilityMap]:
    """Deterministic (ground truth, simulated initial mask, probability map)."""
    rng = SplitMix64(spec.seed)
    gt = np.zeros((spec.height, spec.width), dtype=np.uint8)
    initial = np.zeros_like(gt)
    supports = []
    for recipe in spec.recipes:
        ys, xs = _rasterize(recipe, spec.width, spec.height)
        if recipe.confuser:
            # Confusers must touch, not overwrite, real tissue.
            free = initial[ys, xs] == 0
            ys, xs = ys[free], xs[free]
        else:
            gt[ys, xs] = recipe.cls
        initial[ys, xs] = recipe.cls
        supports.append((recipe, ys, xs))

    prob = np.zeros((spec.height, spec.width), dtype=np.float32)
    for recipe, ys, xs in supports:
        if recipe.cls != CLASS_MELANOMA:
            continue
        # Attribute each pixel to the recipe that drew it last.
        own = initial[ys, xs] == CLASS_MELANOMA
        ys, xs = ys[own], xs[own]
        n = ys.size
        pick_high = rng.uniform_block(n) < recipe.prob_high
        values = rng.uniform_block(n)
        p = np.where(pick_high, 0.81 + 0.18 * values, 0.5 * values)
        prob[ys, xs] = p.astype(np.float32)
    return LabelMask(gt), LabelMask(initial), ProbabilityMap(prob)


PRESETS = ("blobs", "streaks", "epidermis-adjacent", "conformance")


def preset_spec(name: str, seed: int, width: int = 1024, height: int = 1024) -> SynthSpec:
    """Parameterized recipe families used by tests, the CLI, and scripts."""
    rng = SplitMix64(seed ^ 0xFEED)
    recipes: list[ComponentRecipe] = []
    if name == "blobs":
        for _ in range(4 + rng.randrange(4)):
            rx = 12 + rng.randrange(30)
            ry = 12 + rng.randrange(30)
            cx = rx + 2 + rng.randrange(max(width - 2 * rx - 4, 1))
            cy = ry + 2 + rng.randrange(max(height - 2 * ry - 4, 1))
            recipes.append(ComponentRecipe("blob", 2, (cx, cy), (rx, ry)))
    elif name == "streaks":
        # One 600x20 bar per horizontal lane; shallow angles keep each bar
        # inside its lane so the components never merge.
        length, thickness = 600.0, 20.0
        lane_h = max(height // 4, 1)
        count = min(3 + rng.randrange(2), height // lane_h)
        x_margin = int(length / 2) + 2
        for lane in range(count):
            angle = float(rng.randrange(16))
            cx = x_margin + rng.randrange(max(width - 2 * x_margin, 1))
            cy = lane * lane_h + lane_h // 2
            recipes.append(
                ComponentRecipe("bar", 2, (cx, cy), (length, thickness), angle)
            )
    elif name == "epidermis-adjacent":
        band_thickness = 60
        band_y = height // 4
        recipes.append(
            ComponentRecipe(
                "bar",
                1,
                (width // 2, band_y),
                (float(width - 8), float(band_thickness)),
            )
        )
        first_free_row = band_y + band_thickness // 2 + 1
        for _ in range(2 + rng.randrange(3)):
            r = 6 + rng.randrange(8)
            cx = r + 4 + rng.randrange(max(width - 2 * r - 8, 1))
            recipes.append(
                ComponentRecipe(
                    "blob", 2, (cx, first_free_row + r), (float(r), float(r)),
                    prob_high=0.15, confuser=True,
                )
            )
        # Keep a >= 2*ry gap to the band and stay on the slide, so the cap
        # on ry guarantees a valid vertical placement range even at 256^2.
        ry_cap = max((height - band_y - band_thickness - 4) // 4, 8)
        for _ in range(2 + rng.randrange(3)):
            rx = 15 + rng.randrange(20)
            ry = min(15 + rng.randrange(20), ry_cap)
            cx = rx + 2 + rng.randrange(max(width - 2 * rx - 4, 1))
            lo = band_y + band_thickness + 3 * ry
            cy = lo + rng.randrange(max(height - lo - ry - 2, 1))
            recipes.append(
                ComponentRecipe("blob", 2, (cx, cy), (rx, ry), prob_high=0.95)
            )
    elif name == "conformance":
        for _ in range(3 + rng.randrange(3)):
            rx = 10 + rng.randrange(20)
            ry = 10 + rng.randrange(20)
            cx = rx + 2 + rng.randrange(max(width - 2 * rx - 4, 1))
            cy = ry + 2 + rng.randrange(max(height - 2 * ry - 4, 1))
            recipes.append(
                ComponentRecipe("blob", 2, (cx, cy), (rx, ry), prob_high=1.0)
            )
    else:
        raise ValidationError(f"unknown preset {name!r}; choose from {PRESETS}")
    return SynthSpec(seed=seed, width=width, height=height, recipes=tuple(recipes))


@dataclass(frozen=True)
class PromptRecord:
    """One training prompt: its patch window and point in slide coordinates."""

    stage: str
    kind: str
    x0: int
    y0: int
    side: int
    x: int
    y: int

    def to_line(self) -> str:
        return f"{self.stage}\t{self.kind}\t{self.x0}\t{self.y0}\t{self.side}\t{self.x}\t{self.y}"


def records_to_text(records: list["PromptRecord"]) -> str:
    """Tab-separated record list: stage, kind, x0, y0, side, x, y per line."""
    return "".join(r.to_line() + "\n" for r in records)


def _random_pixel(components: ComponentSet, comp_id: int, rng: SplitMix64) -> tuple[int, int]:
    """Uniform over the component's pixels (exact, not rejection sampled)."""
    sp = components.spans(comp_id)
    lengths = sp[:, 2] - sp[:, 1]
    target = rng.randrange(int(lengths.sum()))
    cum = np.cumsum(lengths)
    row = int(np.searchsorted(cum, target, side="right"))
    prev = int(cum[row - 1]) if row else 0
    return int(sp[row, 1] + (target - prev)), int(sp[row, 0])


def prompt_dataset(
    mask: LabelMask,
    side: int,
    stage: str,
    seed: int,
    random_samples: int = 0,
) -> list[PromptRecord]:
    """Training prompt records for the two-stage scheme.

    stage "random-point": non-overlapping full tiles; each melanoma
    component within a tile contributes one uniformly random pixel.
    stage "centered": each slide-level component with an inside centroid
    contributes a centroid record, plus `random_samples` records at random
    melanoma pixels; all windows are prompt-centered.
    """
    rng = SplitMix64(seed)
    plane = class_plane(mask, CLASS_MELANOMA)
    records: list[PromptRecord] = []
    if stage == "random-point":
        h, w = mask.shape
        for ty in range(h // side):
            for tx in range(w // side):
                x0, y0 = tx * side, ty * side
                tile = BinaryMask(plane.data[y0 : y0 + side, x0 : x0 + side])
                comps = connected_components(tile, 8)
                for i in comps.ids():
                    lx, ly = _random_pixel(comps, i, rng)
                    records.append(
                        PromptRecord("random-point", "random", x0, y0, side, x0 + lx, y0 + ly)
                    )
        return records
    if stage == "centered":
        from .geometry import centroid, round_half_up

        comps = connected_components(plane, 8)
        h, w = mask.shape
        for i in comps.ids():
            c = centroid(comps, i)
            if not c.inside:
                continue
            x, y = round_half_up(c.x), round_half_up(c.y)
            win = centered_window((x, y), side, w, h)
            records.append(PromptRecord("centered", "centroid", win.x0, win.y0, side, x, y))
        if random_samples and comps.count:
            areas = np.array([comps.area(i) for i in comps.ids()], dtype=np.int64)
            cum = np.cumsum(areas)
            for _ in range(random_samples):
                target = rng.randrange(int(cum[-1]))
                comp = int(np.searchsorted(cum, target, side="right")) + 1
                x, y = _random_pixel(comps, comp, rng)
                win = centered_window((x, y), side, w, h)
                records.append(PromptRecord("centered", "random", win.x0, win.y0, side, x, y))
        return records
    raise ValidationError(f"unknown stage {stage!r}")
