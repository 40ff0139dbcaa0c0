import numpy as np
import pytest

from slideprompt.raster import BinaryMask, LabelMask


def mask_from_art(art: str) -> np.ndarray:
    """Build a bool array from ascii art ('.' background, anything else on)."""
    rows = [line for line in art.strip().splitlines()]
    return np.array([[c != "." for c in row.strip()] for row in rows], dtype=bool)


def labels_from_art(art: str) -> LabelMask:
    """Build a label mask from ascii digits ('.' = 0)."""
    rows = [line.strip() for line in art.strip().splitlines()]
    data = np.array(
        [[0 if c == "." else int(c) for c in row] for row in rows], dtype=np.uint8
    )
    return LabelMask(data)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_binary(rng, h, w, density=0.4) -> BinaryMask:
    return BinaryMask(rng.random((h, w)) < density)
