"""Point-promptable segmentation backends.

A backend maps (patch, point prompts) -> binary mask. The in-process mock
oracle answers from a ground-truth label raster: the prompt's melanoma
component, clipped to the requested window (out-of-raster pixels are
background, which makes padded slides work transparently). The noisy mock
layers deterministic morphology and false-positive blobs on top to
exercise merge logic under imperfect predictions.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .fixtures import SplitMix64
from .raster import CLASS_MELANOMA, LabelMask, class_plane, connected_components

PROTOCOL_NAME = "slideprompt-predictor"
PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class PatchSource:
    """Where the backend can find the patch pixels.

    kind "file" points at a raster on a shared filesystem; kind "inline"
    carries base64 row-major bytes (format "raw-f32" little-endian floats
    or "raw-u8"); kind "none" is allowed for in-process backends that
    answer from their own state.
    """

    kind: str = "none"
    path: str | None = None
    format: str | None = None
    data: bytes | None = None

    def __post_init__(self):
        if self.kind not in ("none", "file", "inline"):
            raise ValidationError(f"unknown patch source kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValidationError("file patch source requires a path")
        if self.kind == "inline":
            if self.format not in ("raw-f32", "raw-u8"):
                raise ValidationError(f"unknown inline format {self.format!r}")
            if self.data is None:
                raise ValidationError("inline patch source requires data")


@dataclass(frozen=True)
class PredictRequest:
    request_id: int
    width: int
    height: int
    window_x0: int
    window_y0: int
    points: tuple[tuple[int, int], ...]
    patch: PatchSource = field(default_factory=PatchSource)
    multimask: bool = False

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"bad patch dims {self.width}x{self.height}")
        if not self.points:
            raise ValidationError("a predict request needs at least one point")
        for x, y in self.points:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ValidationError(
                    f"point ({x}, {y}) outside patch {self.width}x{self.height}"
                )
        if self.multimask:
            raise ValidationError("multimask output is not supported")


@dataclass(frozen=True)
class PredictResponse:
    request_id: int
    mask: np.ndarray
    score: float

    def __post_init__(self):
        object.__setattr__(self, "mask", np.ascontiguousarray(self.mask, dtype=bool))

    def digest(self) -> str:
        """Transport-independent content hash of the decoded mask."""
        h, w = self.mask.shape
        return hashlib.sha256(b"%d %d " % (w, h) + pack_mask(self.mask)).hexdigest()


class PredictorBackend:
    """Behavioral contract: stateless predict, deterministic unless flagged."""

    nondeterministic: bool = False

    def predict(self, request: PredictRequest) -> PredictResponse:
        raise NotImplementedError

    def close(self) -> None:
        pass


def pack_mask(mask: np.ndarray) -> bytes:
    """Row-major booleans packed MSB-first, final byte zero-padded."""
    return np.packbits(mask.astype(bool).ravel(), bitorder="big").tobytes()


def unpack_mask(payload: bytes, width: int, height: int) -> np.ndarray:
    expected = (width * height + 7) // 8
    if len(payload) != expected:
        raise ValidationError(
            f"packed mask is {len(payload)} bytes, expected {expected}"
        )
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="big")
    return bits[: width * height].astype(bool).reshape(height, width)


def encode_bytes(payload: bytes) -> dict:
    return {
        "data": base64.b64encode(payload).decode("ascii"),
        "crc32": zlib.crc32(payload),
    }


def decode_bytes(obj: dict) -> bytes:
    from .errors import ProtocolError

    try:
        payload = base64.b64decode(obj["data"], validate=True)
    except (KeyError, TypeError, binascii.Error) as e:
        raise ProtocolError(f"bad base64 payload: {e}") from None
    if zlib.crc32(payload) != obj.get("crc32"):
        raise ProtocolError("payload checksum mismatch")
    return payload


class MockOracleBackend(PredictorBackend):
    """Perfect predictor: answers with ground-truth melanoma components."""

    def __init__(self, gt: LabelMask, connectivity: int = 8):
        self._components = connected_components(
            class_plane(gt, CLASS_MELANOMA), connectivity
        )

    def predict(self, request: PredictRequest) -> PredictResponse:
        labels = self._components.labels
        gh, gw = labels.shape
        out = np.zeros((request.height, request.width), dtype=bool)
        hit = False
        for lx, ly in request.points:
            gx, gy = request.window_x0 + lx, request.window_y0 + ly
            if not (0 <= gx < gw and 0 <= gy < gh):
                continue
            comp = int(labels[gy, gx])
            if comp == 0:
                continue
            hit = True
            out |= _clip_component(labels, comp, request)
        return PredictResponse(request.request_id, out, 1.0 if hit else 0.0)


def _clip_component(labels: np.ndarray, comp: int, request: PredictRequest) -> np.ndarray:
    """Component support intersected with the window, padded with background."""
    gh, gw = labels.shape
    x0, y0 = request.window_x0, request.window_y0
    x1, y1 = x0 + request.width, y0 + request.height
    ix0, iy0 = max(x0, 0), max(y0, 0)
    ix1, iy1 = min(x1, gw), min(y1, gh)
    out = np.zeros((request.height, request.width), dtype=bool)
    if ix0 < ix1 and iy0 < iy1:
        out[iy0 - y0 : iy1 - y0, ix0 - x0 : ix1 - x0] = (
            labels[iy0:iy1, ix0:ix1] == comp
        )
    return out


class NoisyMockBackend(PredictorBackend):
    """Oracle plus deterministic imperfections (dilation, erosion, FP blobs)."""

    def __init__(
        self,
        gt: LabelMask,
        connectivity: int = 8,
        dilate: int = 0,
        erode: int = 0,
        fp_blobs: int = 0,
        fp_size: int = 8,
        seed: int = 0,
    ):
        self._oracle = MockOracleBackend(gt, connectivity)
        self.dilate = dilate
        self.erode = erode
        self.fp_blobs = fp_blobs
        self.fp_size = fp_size
        self.seed = seed

    def predict(self, request: PredictRequest) -> PredictResponse:
        resp = self._oracle.predict(request)
        mask = resp.mask.copy()
        if self.erode and mask.any():
            mask = ndimage.binary_erosion(mask, iterations=self.erode)
        if self.dilate and mask.any():
            mask = ndimage.binary_dilation(mask, iterations=self.dilate)
        if self.fp_blobs:
            rng = SplitMix64(self.seed ^ (request.request_id * 0x9E3779B97F4A7C15))
            for _ in range(self.fp_blobs):
                bx = rng.randrange(max(request.width - self.fp_size, 1))
                by = rng.randrange(max(request.height - self.fp_size, 1))
                mask[by : by + self.fp_size, bx : bx + self.fp_size] = True
        return PredictResponse(request.request_id, mask, resp.score)
