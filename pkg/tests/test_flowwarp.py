import numpy as np
import pytest

from inkprop.errors import DimensionMismatch, MalformedFlowFile
from inkprop.flowwarp import (
    FlowField,
    block_match_grid,
    estimate_flow,
    load_flow,
    recolor_regions,
    save_flow,
    warp_colors,
)
from inkprop.raster import LineArtRaster, LineClass, RgbRaster

from .conftest import make_random_lineart
from . import oracles


class TestRecolorRegions:
    def test_k1_single_center(self, rng):
        pal = recolor_regions(1, rng)
        assert pal.colors.shape == (1, 3)
        assert tuple(pal.colors[0]) == (128, 128, 128)
        assert pal.side == 255.0

    def test_k8_centers(self, rng):
        pal = recolor_regions(8, rng)
        assert pal.side == pytest.approx(127.5)
        values = {int(v) for v in pal.colors.ravel()}
        assert values == {64, 191}  # round(63.75), round(191.25)
        # all 8 corners of the 2x2x2 grid present
        assert len({tuple(c) for c in pal.colors}) == 8

    def test_perfect_cube_side_matches_formula(self, rng):
        for K in (1, 8, 27, 64):
            pal = recolor_regions(K, rng)
            assert pal.side == pytest.approx(255.0 * K ** (-1 / 3), rel=1e-9)

    def test_colors_distinct_and_separated(self, rng):
        for K in range(1, 65):
            pal = recolor_regions(K, rng)
            colors = pal.colors.astype(int)
            assert len({tuple(c) for c in colors}) == K
            if K > 1:
                diffs = np.abs(colors[:, None, :] - colors[None, :, :]).max(axis=2)
                np.fill_diagonal(diffs, 10_000)
                assert diffs.min() >= int(np.floor(pal.side)) - 1

    def test_colors_sit_at_cube_centers(self, rng):
        for K in (3, 5, 12, 40, 64):
            pal = recolor_regions(K, rng)
            n = int(round(255.0 / pal.side))
            for c in pal.colors.astype(float):
                cell = np.floor(c / pal.side)
                cell = np.clip(cell, 0, n - 1)
                center = (cell + 0.5) * pal.side
                assert np.abs(c - center).max() <= 0.5 + 1e-9

    def test_deterministic_permutation(self):
        a = recolor_regions(10, np.random.default_rng(4))
        b = recolor_regions(10, np.random.default_rng(4))
        assert (a.colors == b.colors).all()


def lines_with_bar(h=64, w=64, x=20):
    classes = np.zeros((h, w), dtype=np.uint8)
    classes[8:56, x] = LineClass.BLACK
    classes[30, 5:60] = LineClass.BLACK
    return LineArtRaster(classes)


class TestEstimateFlow:
    def test_identical_frames_zero_flow(self):
        la = lines_with_bar()
        flow = estimate_flow(la, la, block=16, radius=8)
        assert np.abs(flow.vectors).max() == 0

    def test_blank_pair_zero_flow(self):
        blank = LineArtRaster(np.zeros((32, 32), dtype=np.uint8))
        flow = estimate_flow(blank, blank, block=8, radius=4)
        assert np.abs(flow.vectors).max() == 0

    def test_pure_translation_recovered(self, rng):
        # target = reference shifted by (+7, 0); backward flow is (-7, 0).
        # dense strokes give every block 2D structure (one lone straight
        # line per block is aperture-ambiguous and excused)
        good = total = 0
        for trial in range(5):
            classes = np.zeros((64, 64), dtype=np.uint8)
            for _ in range(14):
                if rng.random() < 0.5:
                    y = int(rng.integers(2, 62))
                    x0, x1 = sorted(rng.integers(0, 64, size=2))
                    classes[y, x0 : x1 + 1] = LineClass.BLACK
                else:
                    x = int(rng.integers(2, 62))
                    y0, y1 = sorted(rng.integers(0, 64, size=2))
                    classes[y0 : y1 + 1, x] = LineClass.BLACK
            ref = LineArtRaster(classes)
            shifted = oracles.shift_image(ref.classes, -7, 0, 0)  # moves +7
            tgt = LineArtRaster(shifted)
            grid, _ = block_match_grid(ref, tgt, block=16, radius=12)
            tgt_mask = tgt.classes != 0
            for bi in range(grid.shape[0]):
                for bj in range(grid.shape[1]):
                    blockpix = tgt_mask[
                        bi * 16 : (bi + 1) * 16, bj * 16 : (bj + 1) * 16
                    ]
                    if blockpix.sum() >= 8:
                        total += 1
                        good += tuple(grid[bi, bj]) == (-7.0, 0.0)
        assert total > 20
        assert good / total >= 0.9

    def test_dimension_mismatch(self):
        a = LineArtRaster(np.zeros((16, 16), dtype=np.uint8))
        b = LineArtRaster(np.zeros((16, 18), dtype=np.uint8))
        with pytest.raises(DimensionMismatch):
            estimate_flow(a, b)


class TestWarpColors:
    def test_zero_flow_identity(self, rng):
        img = rng.integers(0, 255, size=(20, 20, 3)).astype(np.uint8)
        ref = RgbRaster(pixels=img)
        flow = FlowField(vectors=np.zeros((20, 20, 2)))
        out = warp_colors(ref, flow, background=(0, 0, 0))
        assert (out.pixels == img).all()

    def test_constant_flow_shifts_edge(self):
        img = np.zeros((10, 40, 3), dtype=np.uint8)
        img[:, 20:] = (200, 10, 10)  # edge at x=20
        ref = RgbRaster(pixels=img)
        flow = FlowField(vectors=np.full((10, 40, 2), 0.0))
        v = np.zeros((10, 40, 2))
        v[..., 0] = -5
        out = warp_colors(ref, FlowField(vectors=v), background=(0, 0, 0))
        # out(x) = ref(x-5): edge appears at x=25
        assert (out.pixels[:, 25:, 0] == 200).all()
        assert (out.pixels[:, 5:25, 0] == 0).all()

    def test_integer_flow_equals_array_shift(self, rng):
        for _ in range(10):
            img = rng.integers(0, 255, size=(16, 16, 3)).astype(np.uint8)
            dx, dy = int(rng.integers(-6, 7)), int(rng.integers(-6, 7))
            v = np.zeros((16, 16, 2))
            v[..., 0] = dx
            v[..., 1] = dy
            out = warp_colors(RgbRaster(pixels=img), FlowField(vectors=v), (9, 9, 9))
            expected = oracles.shift_image(img, dx, dy, 9)
            assert (out.pixels == expected).all()

    def test_all_out_of_bounds_gives_background(self):
        img = np.full((8, 8, 3), 77, dtype=np.uint8)
        v = np.full((8, 8, 2), 100.0)
        out = warp_colors(RgbRaster(pixels=img), FlowField(vectors=v), (1, 2, 3))
        assert (out.pixels == (1, 2, 3)).all()


class TestFlowFile:
    def test_round_trip(self, tmp_path, rng):
        v = rng.normal(size=(12, 9, 2)).astype(np.float32).astype(np.float64)
        flow = FlowField(vectors=v)
        p = tmp_path / "f.iflo"
        save_flow(flow, p)
        again = load_flow(p)
        assert (again.vectors == flow.vectors).all()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.iflo"
        p.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(MalformedFlowFile):
            load_flow(p)

    def test_truncated(self, tmp_path):
        import struct

        p = tmp_path / "short.iflo"
        p.write_bytes(b"IFLO" + struct.pack("<II", 4, 4) + b"\x00" * 10)
        with pytest.raises(MalformedFlowFile):
            load_flow(p)

    def test_external_method_validates_size(self, tmp_path):
        v = np.zeros((8, 8, 2))
        p = tmp_path / "f.iflo"
        save_flow(FlowField(vectors=v), p)
        la8 = LineArtRaster(np.zeros((8, 8), dtype=np.uint8))
        la9 = LineArtRaster(np.zeros((9, 9), dtype=np.uint8))
        flow = estimate_flow(la8, la8, method="file", path=p)
        assert flow.width == 8
        with pytest.raises(DimensionMismatch):
            estimate_flow(la9, la9, method="file", path=p)
