import numpy as np
import pytest

from slideprompt.errors import ValidationError
from slideprompt.geometry import aabb, box_dims, centroid, convex_hull, min_area_bbox
from slideprompt.raster import BinaryMask, connected_components

from conftest import mask_from_art
from oracles import pixel_corner_points, sweep_min_area


def single_component(mask: np.ndarray):
    cs = connected_components(BinaryMask(mask), 8)
    assert cs.count >= 1
    return cs


def rasterize_rect(w: float, h: float, angle_deg: float, canvas: int = 128) -> np.ndarray:
    """Pixel-center-inside test for a rotated w x h rectangle."""
    c = canvas / 2.0
    yy, xx = np.mgrid[0:canvas, 0:canvas]
    t = np.deg2rad(angle_deg)
    u = (xx - c) * np.cos(t) + (yy - c) * np.sin(t)
    v = -(xx - c) * np.sin(t) + (yy - c) * np.cos(t)
    return (np.abs(u) <= w / 2) & (np.abs(v) <= h / 2)


def random_blob(rng, size: int = 96) -> np.ndarray:
    """Union of a few overlapping ellipses, guaranteed single component."""
    canvas = np.zeros((size, size), dtype=bool)
    cx, cy = size / 2, size / 2
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(rng.integers(1, 4)):
        rx = rng.uniform(3, size / 4)
        ry = rng.uniform(3, size / 4)
        ox = cx + rng.uniform(-size / 8, size / 8)
        oy = cy + rng.uniform(-size / 8, size / 8)
        t = rng.uniform(0, np.pi)
        u = (xx - ox) * np.cos(t) + (yy - oy) * np.sin(t)
        v = -(xx - ox) * np.sin(t) + (yy - oy) * np.cos(t)
        canvas |= (u / rx) ** 2 + (v / ry) ** 2 <= 1
    if not canvas.any():
        canvas[size // 2, size // 2] = True
    return canvas


class TestCentroid:
    def test_solid_square_at_origin(self):
        cs = single_component(mask_from_art("####\n####\n####\n####"))
        c = centroid(cs, 1)
        assert (c.x, c.y) == (1.5, 1.5)
        assert c.inside

    def test_ring_centroid_falls_in_hole(self):
        art = mask_from_art(
            """
            .###.
            ##.##
            #...#
            ##.##
            .###.
            """
        )
        cs = single_component(art)
        c = centroid(cs, 1)
        assert c.x == pytest.approx(2.0)
        assert c.y == pytest.approx(2.0)
        assert not c.inside

    def test_matches_direct_summation(self, rng):
        for _ in range(30):
            blob = random_blob(rng, 64)
            cs = single_component(blob)
            c = centroid(cs, 1)
            ys, xs = np.nonzero(blob)
            assert c.x == pytest.approx(xs.mean(), abs=1e-12)
            assert c.y == pytest.approx(ys.mean(), abs=1e-12)

    def test_translation_equivariance(self, rng):
        blob = random_blob(rng, 48)
        base = centroid(single_component(blob), 1)
        shifted = np.zeros((80, 80), dtype=bool)
        shifted[17 : 17 + 48, 9 : 9 + 48] = blob
        moved = centroid(single_component(shifted), 1)
        assert moved.x == pytest.approx(base.x + 9, abs=1e-12)
        assert moved.y == pytest.approx(base.y + 17, abs=1e-12)

    def test_invalid_component_rejected(self):
        cs = single_component(np.ones((2, 2), dtype=bool))
        with pytest.raises(ValidationError):
            centroid(cs, 2)


class TestAabb:
    def test_single_pixel(self):
        m = np.zeros((5, 5), dtype=bool)
        m[2, 3] = True
        assert aabb(single_component(m), 1) == (1, 1)

    def test_horizontal_run(self):
        m = np.zeros((3, 700), dtype=bool)
        m[1, 50:650] = True
        assert aabb(single_component(m), 1) == (600, 1)

    def test_matches_min_max_scan(self, rng):
        for _ in range(30):
            blob = random_blob(rng, 72)
            cs = single_component(blob)
            ys, xs = np.nonzero(blob)
            assert aabb(cs, 1) == (xs.max() - xs.min() + 1, ys.max() - ys.min() + 1)


class TestMinAreaBox:
    def test_axis_aligned_rectangle(self):
        m = np.zeros((20, 20), dtype=bool)
        m[4:7, 5:15] = True  # 10 wide, 3 tall
        box = min_area_bbox(single_component(m), 1)
        assert box.w_m == pytest.approx(3, abs=1e-6)
        assert box.h_m == pytest.approx(10, abs=1e-6)

    def test_rotated_rectangle_beats_its_aabb(self):
        m = rasterize_rect(40, 10, 45)
        cs = single_component(m)
        w_s, h_s = aabb(cs, 1)
        box = min_area_bbox(cs, 1)
        assert box.area <= w_s * h_s

    @pytest.mark.parametrize("angle", [0, 15, 30, 45])
    def test_rotation_robust_aspect(self, angle):
        m = rasterize_rect(60, 20, angle)
        box = min_area_bbox(single_component(m), 1)
        assert box.aspect == pytest.approx(3.0, rel=0.15)

    def test_matches_angle_sweep_oracle(self, rng):
        for _ in range(40):
            blob = random_blob(rng, 96)
            cs = single_component(blob)
            got = min_area_bbox(cs, 1).area
            expected = sweep_min_area(pixel_corner_points(blob))
            # The sweep is a lower-resolution search, so it can only be
            # at or above the true minimum.
            assert got <= expected + 1e-9
            assert expected <= got * 1.005

    def test_single_pixel_box_is_unit_square(self):
        m = np.zeros((3, 3), dtype=bool)
        m[1, 1] = True
        box = min_area_bbox(single_component(m), 1)
        assert box.w_m == pytest.approx(1.0, abs=1e-9)
        assert box.h_m == pytest.approx(1.0, abs=1e-9)

    def test_never_beats_aabb(self, rng):
        for _ in range(40):
            blob = random_blob(rng, 64)
            cs = single_component(blob)
            dims = box_dims(cs, 1)  # validates w_m*h_m <= w_s*h_s internally
            assert dims.h_m >= dims.w_m > 0


class TestConvexHull:
    def test_hull_of_square_corners(self):
        pts = np.array([[0, 0], [2, 0], [1, 1], [0, 2], [2, 2]])
        hull = convex_hull(pts)
        assert len(hull) == 4
        assert {tuple(p) for p in hull} == {(0, 0), (2, 0), (2, 2), (0, 2)}

    def test_collinear_points_collapse(self):
        pts = np.array([[0, 0], [1, 1], [2, 2], [3, 3]])
        hull = convex_hull(pts)
        assert len(hull) == 2
