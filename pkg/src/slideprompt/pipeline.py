"""End-to-end orchestration: refine the initial mask, plan prompts, drive
the predictor over prompt-centered patches, and union-merge everything
into the final melanoma mask.

The final mask is the union of the refined initial mask and all pasted
predictor masks, so it can only grow relative to the refined mask, and
the result is independent of request scheduling. Slides smaller than the
patch side are padded with class 0 / probability 0 and cropped back (pad
mode). Every run emits a JSON-lines manifest with input hashes, the
config snapshot, and per-prompt request/response digests.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import SlidepromptError, ValidationError
from .postprocess import PostprocessConfig, PostprocessReport, postprocess_mask
from .predictor import PatchSource, PredictorBackend, PredictRequest, PredictResponse
from .prompting import PromptConfig, PromptPlan, plan_prompts
from .raster import BinaryMask, LabelMask, ProbabilityMap, same_grid
from .tiling import PatchWindow, centered_window
from .wire import WireBackend, encode_frame, request_to_frame


@dataclass(frozen=True)
class PipelineConfig:
    post: PostprocessConfig = field(default_factory=PostprocessConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    concurrency: int = 4
    joint_points: bool = False
    # Fail-fast is the default: silently dropped prompts would corrupt run
    # comparability. best_effort skips failing prompts instead (serially).
    best_effort: bool = False

    def __post_init__(self):
        if self.concurrency < 1:
            raise ValidationError(f"concurrency must be >= 1, got {self.concurrency}")

    @property
    def patch_side(self) -> int:
        return self.prompt.patch_side


class PipelineAborted(SlidepromptError):
    """A predictor failure stopped the run; carries the partial manifest."""

    def __init__(self, cause: BaseException, manifest: "RunManifest"):
        super().__init__(f"pipeline aborted: {cause}")
        self.cause = cause
        self.manifest = manifest


@dataclass(frozen=True)
class PromptOutcome:
    request_id: int
    component_id: int
    mode: str
    points: tuple[tuple[int, int], ...]
    window: tuple[int, int, int]
    request_sha256: str
    response_sha256: str
    mask_pixels: int
    score: float


@dataclass
class RunManifest:
    config: dict
    input_hashes: dict
    prompts: list[PromptOutcome] = field(default_factory=list)
    escalated: bool = False
    elapsed_s: float = 0.0

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {"type": "run-header", "config": self.config, "inputs": self.input_hashes},
                sort_keys=True,
            )
        ]
        for p in sorted(self.prompts, key=lambda p: p.request_id):
            lines.append(json.dumps({"type": "prompt", **dataclasses.asdict(p)}, sort_keys=True))
        lines.append(
            json.dumps(
                {
                    "type": "run-footer",
                    "prompts": len(self.prompts),
                    "escalated": self.escalated,
                    "elapsed_s": self.elapsed_s,
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_jsonl())

    @staticmethod
    def load(path) -> "RunManifest":
        header = None
        prompts = []
        footer = {}
        with open(path) as f:
            for line in f:
                obj = json.loads(line)
                if obj["type"] == "run-header":
                    header = obj
                elif obj["type"] == "prompt":
                    obj.pop("type")
                    obj["points"] = tuple(tuple(p) for p in obj["points"])
                    obj["window"] = tuple(obj["window"])
                    prompts.append(PromptOutcome(**obj))
                elif obj["type"] == "run-footer":
                    footer = obj
        if header is None:
            raise ValidationError("manifest lacks a run-header line")
        return RunManifest(
            config=header["config"],
            input_hashes=header["inputs"],
            prompts=prompts,
            escalated=bool(footer.get("escalated", False)),
            elapsed_s=float(footer.get("elapsed_s", 0.0)),
        )


@dataclass
class PipelineResult:
    final: BinaryMask
    predictor_mask: BinaryMask
    refined: BinaryMask
    plan: PromptPlan
    report: PostprocessReport
    manifest: RunManifest


def paste(accumulated: BinaryMask, window: PatchWindow, patch_mask: np.ndarray) -> BinaryMask:
    """Logical OR of a patch mask into slide coordinates at the window origin."""
    h, w = accumulated.shape
    if window.x0 < 0 or window.y0 < 0 or window.x0 + window.width > w or window.y0 + window.height > h:
        raise ValidationError(f"window {window} outside slide {w}x{h}")
    patch_mask = np.asarray(patch_mask, dtype=bool)
    if patch_mask.shape != (window.height, window.width):
        raise ValidationError(
            f"patch shape {patch_mask.shape} does not match window "
            f"{window.height}x{window.width}"
        )
    out = accumulated.data.copy()
    ys, xs = window.slices
    out[ys, xs] |= patch_mask
    return BinaryMask(out)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _build_requests(
    plan: PromptPlan,
    cfg: PipelineConfig,
    slide_w: int,
    slide_h: int,
    probmap: ProbabilityMap | None,
    image_path: str | None,
    inline_patches: bool,
) -> list[tuple[PredictRequest, PromptOutcome]]:
    side = cfg.patch_side
    requests = []
    next_id = 1
    for comp in plan.prompts:
        groups: list[list[tuple[int, int]]]
        if cfg.joint_points:
            groups = _group_points(comp.points, side, slide_w, slide_h)
        else:
            groups = [[p] for p in comp.points]
        for group in groups:
            window = centered_window(group[0], side, slide_w, slide_h)
            local = tuple((x - window.x0, y - window.y0) for x, y in group)
            patch = _patch_source(window, probmap, image_path, inline_patches)
            request = PredictRequest(
                request_id=next_id,
                width=window.width,
                height=window.height,
                window_x0=window.x0,
                window_y0=window.y0,
                points=local,
                patch=patch,
            )
            stub = PromptOutcome(
                request_id=next_id,
                component_id=comp.component_id,
                mode=comp.mode,
                points=tuple(group),
                window=(window.x0, window.y0, side),
                request_sha256=_sha256(encode_frame(request_to_frame(request))),
                response_sha256="",
                mask_pixels=0,
                score=0.0,
            )
            requests.append((request, stub))
            next_id += 1
    return requests


def _group_points(points, side, slide_w, slide_h):
    """Greedy grouping for joint-point mode: each group shares one window."""
    remaining = list(points)
    groups = []
    while remaining:
        anchor = remaining[0]
        window = centered_window(anchor, side, slide_w, slide_h)
        inside = [
            p
            for p in remaining
            if window.x0 <= p[0] < window.x0 + window.width
            and window.y0 <= p[1] < window.y0 + window.height
        ]
        groups.append(inside)
        remaining = [p for p in remaining if p not in inside]
    return groups


def _patch_source(window, probmap, image_path, inline_patches) -> PatchSource:
    if image_path is not None:
        return PatchSource("file", path=str(image_path))
    if inline_patches and probmap is not None:
        ys, xs = window.slices
        crop = np.ascontiguousarray(probmap.data[ys, xs], dtype="<f4")
        return PatchSource("inline", format="raw-f32", data=crop.tobytes())
    return PatchSource()


def _run_requests(
    backend: PredictorBackend, requests: list[PredictRequest], concurrency: int
) -> dict[int, PredictResponse]:
    if isinstance(backend, WireBackend):
        return backend.predict_many(requests, concurrency)
    if concurrency == 1 or len(requests) <= 1:
        return {r.request_id: backend.predict(r) for r in requests}
    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        responses = list(pool.map(backend.predict, requests))
    return {r.request_id: r for r in responses}


def run_pipeline(
    mask: LabelMask,
    probmap: ProbabilityMap,
    cfg: PipelineConfig,
    backend: PredictorBackend,
    image_path: str | None = None,
    inline_patches: bool = False,
) -> PipelineResult:
    """Refine -> prompt -> predict -> union-merge one slide."""
    same_grid(mask, probmap)
    start = time.monotonic()
    slide_h, slide_w = mask.shape
    side = cfg.patch_side
    pad_w = max(side - slide_w, 0)
    pad_h = max(side - slide_h, 0)
    work_mask, work_prob = mask, probmap
    if pad_w or pad_h:
        work_mask = LabelMask(np.pad(mask.data, ((0, pad_h), (0, pad_w))))
        work_prob = ProbabilityMap(np.pad(probmap.data, ((0, pad_h), (0, pad_w))))

    refined, report = postprocess_mask(work_mask, work_prob, cfg.post)
    plan = plan_prompts(refined, cfg.prompt, cfg.post.connectivity)

    h, w = work_mask.shape
    pairs = _build_requests(plan, cfg, w, h, work_prob, image_path, inline_patches)

    def partial_manifest(outcomes):
        return RunManifest(
            config=_config_snapshot(cfg),
            input_hashes=_input_hashes(mask, probmap),
            prompts=outcomes,
            escalated=plan.slide_escalated,
            elapsed_s=time.monotonic() - start,
        )

    outcomes: list[PromptOutcome] = []
    predicted = np.zeros((h, w), dtype=bool)
    if cfg.best_effort:
        responses = {}
        for request, _ in pairs:
            try:
                responses[request.request_id] = backend.predict(request)
            except SlidepromptError:
                continue
    else:
        try:
            responses = _run_requests(backend, [r for r, _ in pairs], cfg.concurrency)
        except SlidepromptError as e:
            raise PipelineAborted(e, partial_manifest(outcomes)) from e

    for request, stub in pairs:
        if request.request_id not in responses:
            continue
        response = responses[request.request_id]
        ys = slice(request.window_y0, request.window_y0 + request.height)
        xs = slice(request.window_x0, request.window_x0 + request.width)
        predicted[ys, xs] |= response.mask
        outcomes.append(
            dataclasses.replace(
                stub,
                response_sha256=response.digest(),
                mask_pixels=int(response.mask.sum()),
                score=response.score,
            )
        )

    final = predicted | refined.data
    if pad_w or pad_h:
        final = final[:slide_h, :slide_w]
        predicted = predicted[:slide_h, :slide_w]
        refined = BinaryMask(refined.data[:slide_h, :slide_w])

    manifest = RunManifest(
        config=_config_snapshot(cfg),
        input_hashes=_input_hashes(mask, probmap),
        prompts=outcomes,
        escalated=plan.slide_escalated,
        elapsed_s=time.monotonic() - start,
    )
    return PipelineResult(
        final=BinaryMask(final),
        predictor_mask=BinaryMask(predicted),
        refined=refined,
        plan=plan,
        report=report,
        manifest=manifest,
    )


def _config_snapshot(cfg: PipelineConfig) -> dict:
    return dataclasses.asdict(cfg)


def _input_hashes(mask: LabelMask, probmap: ProbabilityMap) -> dict:
    return {
        "mask_sha256": _sha256(mask.data.tobytes()),
        "probmap_sha256": _sha256(probmap.data.tobytes()),
        "width": mask.width,
        "height": mask.height,
    }
