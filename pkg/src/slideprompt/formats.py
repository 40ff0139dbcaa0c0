"""Bit-exact PGM (P5) and PFM readers/writers.

Masks travel as binary PGM with maxval 255 where the pixel value is the
class index. Probability maps travel as single-channel PFM, little-endian
(negative scale), rows stored bottom-up per the PFM convention. Round
trips preserve every byte.
"""

from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .raster import BinaryMask, LabelMask, ProbabilityMap

_WHITESPACE = b" \t\r\n\v\f"


def _read_token(f: io.BufferedIOBase) -> bytes:
    """Next whitespace-delimited token, skipping '#' comment lines."""
    tok = b""
    while True:
        c = f.read(1)
        if c == b"":
            if tok:
                return tok
            raise FormatError("unexpected end of header")
        if c == b"#":
            while c not in (b"", b"\n"):
                c = f.read(1)
            continue
        if c in _WHITESPACE:
            if tok:
                return tok
            continue
        tok += c


def _int_token(f: io.BufferedIOBase, what: str) -> int:
    tok = _read_token(f)
    try:
        value = int(tok)
    except ValueError:
        raise FormatError(f"bad {what} field {tok!r}") from None
    if value <= 0:
        raise FormatError(f"{what} must be positive, got {value}")
    return value


def load_pgm(path: str | os.PathLike) -> np.ndarray:
    """Raw uint8 pixel array of a binary (P5, maxval 255) PGM file."""
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic != b"P5":
            raise FormatError(f"not a binary PGM (magic {magic!r})")
        width = _int_token(f, "width")
        height = _int_token(f, "height")
        maxval = _int_token(f, "maxval")
        if maxval != 255:
            raise FormatError(f"unsupported maxval {maxval}, expected 255")
        payload = f.read(width * height + 1)
    if len(payload) < width * height:
        raise FormatError(
            f"truncated PGM payload: {len(payload)} bytes for {width}x{height}"
        )
    if len(payload) > width * height:
        raise FormatError("trailing bytes after PGM payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def save_pgm(data: np.ndarray, path: str | os.PathLike) -> None:
    data = np.ascontiguousarray(data, dtype=np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(data.tobytes())


def load_mask(path: str | os.PathLike) -> LabelMask:
    """Load a class-index mask; values outside {0,1,2} are rejected."""
    data = load_pgm(path)
    if data.size and int(data.max()) > 2:
        raise ValidationError(
            f"{Path(path).name}: pixel value {int(data.max())} is not a class index"
        )
    return LabelMask(data)


def save_mask(mask: LabelMask, path: str | os.PathLike) -> None:
    save_pgm(mask.data, path)


def save_plane(mask: BinaryMask, path: str | os.PathLike, class_id: int = 2) -> None:
    """Write a binary mask as a label PGM with foreground = class_id."""
    save_pgm(mask.data.astype(np.uint8) * np.uint8(class_id), path)


def load_pfm(path: str | os.PathLike) -> np.ndarray:
    """Raw float32 array of a grayscale PFM file (rows returned top-down)."""
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic == b"PF":
            raise FormatError("color PFM not supported, expected grayscale 'Pf'")
        if magic != b"Pf":
            raise FormatError(f"not a PFM (magic {magic!r})")
        width = _int_token(f, "width")
        height = _int_token(f, "height")
        tok = _read_token(f)
        try:
            scale = float(tok)
        except ValueError:
            raise FormatError(f"bad scale field {tok!r}") from None
        if scale == 0:
            raise FormatError("PFM scale must be nonzero")
        dtype = "<f4" if scale < 0 else ">f4"
        payload = f.read(width * height * 4 + 1)
    if len(payload) < width * height * 4:
        raise FormatError(
            f"truncated PFM payload: {len(payload)} bytes for {width}x{height}"
        )
    if len(payload) > width * height * 4:
        raise FormatError("trailing bytes after PFM payload")
    data = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    # PFM stores the bottom row first.
    return np.ascontiguousarray(data[::-1].astype("<f4"))


def save_pfm(data: np.ndarray, path: str | os.PathLike) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n%d %d\n-1.0\n" % (w, h))
        f.write(np.ascontiguousarray(data[::-1]).tobytes())


def load_probmap(path: str | os.PathLike) -> ProbabilityMap:
    """Load a probability map, rejecting values outside [0, 1]."""
    data = load_pfm(path)
    if data.size and not bool(np.all((data >= 0.0) & (data <= 1.0))):
        raise ValidationError(f"{Path(path).name}: probabilities outside [0, 1]")
    return ProbabilityMap(data)


def save_probmap(probmap: ProbabilityMap, path: str | os.PathLike) -> None:
    save_pfm(probmap.data, path)
