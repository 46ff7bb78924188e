import numpy as np
import pytest

from inkprop.raster import LineClass, RgbRaster, extract_segments, pack_rgb
from inkprop.synthesis import (
    extract_color_lines,
    generate_clip,
    gt_colored,
    lines_from_flat,
    render_region_map,
    toy_occlusion_spec,
    toy_translating_spec,
)

from .conftest import make_random_flat
from . import oracles


def solid(h, w, color):
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[...] = color
    return img


class TestLinesFromFlat:
    def test_single_color_gets_border_ring(self):
        out = lines_from_flat(RgbRaster(pixels=solid(10, 10, (50, 60, 70))), 1)
        black = out.classes == LineClass.BLACK
        assert black[0].all() and black[-1].all()
        assert black[:, 0].all() and black[:, -1].all()
        assert not black[1:-1, 1:-1].any()
        assert int(black.sum()) == 100 - 64

    def test_thin_component_goes_fully_black(self):
        img = solid(7, 9, (255, 255, 255))
        img[2:4, 2:7] = (10, 10, 10)  # 2 px thin: erosion by r=1 is empty
        out = lines_from_flat(RgbRaster(pixels=img), 1)
        assert (out.classes[2:4, 2:7] == LineClass.BLACK).all()

    def test_3x3_component_keeps_center(self):
        # a 3x3 square is exactly 2r+1 wide: its erosion is the center pixel
        img = solid(7, 7, (255, 255, 255))
        img[2:5, 2:5] = (10, 10, 10)
        out = lines_from_flat(RgbRaster(pixels=img), 1)
        ring = out.classes[2:5, 2:5] == LineClass.BLACK
        assert int(ring.sum()) == 8 and not ring[1, 1]

    def test_blank_segments_monochrome(self, rng):
        for _ in range(8):
            flat = make_random_flat(rng, 20, 20)
            lines = lines_from_flat(flat, 1)
            seg = extract_segments(lines)
            keys = pack_rgb(flat.pixels)
            for r in seg.records:
                mask = seg.ids == r.id
                assert len(np.unique(keys[mask])) == 1

    def test_erosion_matches_brute_force(self, rng):
        for radius in (1, 2):
            flat = make_random_flat(rng, 16, 16, n_colors=2)
            lines = lines_from_flat(flat, radius)
            keys = pack_rgb(flat.pixels)
            expected = np.zeros((16, 16), dtype=bool)
            for k in np.unique(keys):
                mask = keys == k
                expected |= mask & ~oracles.brute_erosion(mask, radius)
            assert ((lines.classes == LineClass.BLACK) == expected).all()

    def test_segments_within_one_color_component(self, rng):
        flat = make_random_flat(rng, 18, 18)
        seg = extract_segments(lines_from_flat(flat, 1))
        comps = oracles.per_color_components(flat.pixels)
        for r in seg.records:
            ys, xs = np.nonzero(seg.ids == r.id)
            pix = set(zip(ys.tolist(), xs.tolist()))
            assert sum(1 for _, comp in comps if pix <= comp) == 1


class TestExtractColorLines:
    def test_highlight_band_red(self):
        img = solid(12, 12, (255, 255, 255))
        img[2:9, 2:9] = (250, 220, 100)  # highlight region
        out = extract_color_lines(
            RgbRaster(pixels=img), {(250, 220, 100)}, set(), 1
        )
        red = out.classes == LineClass.RED
        black = out.classes == LineClass.BLACK
        assert red.any() and black.any()
        # red band only on the highlight component's rim
        comp = img[..., 0] == 250
        assert (red <= comp).all()
        assert not (black & comp).any()

    def test_empty_sets_equal_lines_from_flat(self, rng):
        flat = make_random_flat(rng, 14, 14)
        a = extract_color_lines(flat, set(), set(), 1)
        b = lines_from_flat(flat, 1)
        assert (a.classes == b.classes).all()

    def test_red_count_equals_band_areas(self, rng):
        flat = make_random_flat(rng, 16, 16, n_colors=3)
        keys = pack_rgb(flat.pixels)
        uniq = np.unique(keys)
        hl_key = int(uniq[0])
        hl = {(hl_key >> 16 & 255, hl_key >> 8 & 255, hl_key & 255)}
        out = extract_color_lines(flat, hl, set(), 1)
        expected = 0
        for comp in oracles.flood_fill_components(keys == hl_key):
            mask = np.zeros((16, 16), dtype=bool)
            for y, x in comp:
                mask[y, x] = True
            expected += len(comp) - int(oracles.brute_erosion(mask, 1).sum())
        assert int((out.classes == LineClass.RED).sum()) == expected

    def test_color_and_black_bands_disjoint(self, rng):
        flat = make_random_flat(rng, 16, 16, n_colors=3)
        keys = pack_rgb(flat.pixels)
        uniq = np.unique(keys)
        hl_key, sh_key = int(uniq[0]), int(uniq[1])
        unpack = lambda k: (k >> 16 & 255, k >> 8 & 255, k & 255)
        out = extract_color_lines(flat, {unpack(hl_key)}, {unpack(sh_key)}, 1)
        red = out.classes == LineClass.RED
        blue = out.classes == LineClass.BLUE
        black = out.classes == LineClass.BLACK
        assert not (red & blue).any() and not (red & black).any()
        assert not (blue & black).any()


class TestGenerateClip:
    def test_deterministic(self):
        spec = toy_translating_spec(7)
        a = generate_clip(spec)
        b = generate_clip(spec)
        for fa, fb in zip(a, b):
            assert (fa.flat.pixels == fb.flat.pixels).all()
            assert (fa.lines.classes == fb.lines.classes).all()
            assert (fa.segmap.ids == fb.segmap.ids).all()
            assert (fa.region_map == fb.region_map).all()

    def test_static_clip_frames_identical(self):
        spec = toy_translating_spec(3)
        static = spec.__class__(
            frame_count=2,
            width=spec.width,
            height=spec.height,
            background=spec.background,
            shapes=tuple(
                s.__class__(
                    regions=s.regions,
                    pivot=s.pivot,
                    motions=((0.0, 0.0, 0.0, 1.0),) * 2,
                )
                for s in spec.shapes
            ),
            seed=spec.seed,
        )
        frames = generate_clip(static)
        assert (frames[0].flat.pixels == frames[1].flat.pixels).all()
        assert (frames[0].lines.classes == frames[1].lines.classes).all()

    def test_translation_moves_centroid(self):
        from inkprop.synthesis import ClipSpec, Region, ShapeSpec, _linear_motion

        square = Region(
            "polygon", ((20.0, 20.0), (36.0, 20.0), (36.0, 36.0), (20.0, 36.0)),
            (200, 60, 60),
        )
        spec = ClipSpec(
            frame_count=3,
            width=64,
            height=64,
            background=(255, 255, 255),
            shapes=(
                ShapeSpec(
                    regions=(square,), pivot=(28.0, 28.0),
                    motions=_linear_motion(3, 5.0, 0.0),
                ),
            ),
            seed=0,
        )
        frames = generate_clip(spec)
        cxs = []
        for f in frames:
            ys, xs = np.nonzero(f.region_map == 1)
            cxs.append(xs.mean())
        assert cxs[1] - cxs[0] == pytest.approx(5.0, abs=0.2)
        assert cxs[2] - cxs[1] == pytest.approx(5.0, abs=0.2)

    def test_paired_frame_invariants(self):
        for seed in range(4):
            for f in generate_clip(toy_translating_spec(seed)):
                assert f.flat.pixels.shape[:2] == f.lines.classes.shape
                assert f.segmap.ids.shape == f.region_map.shape
                keys = pack_rgb(f.flat.pixels)
                for r in f.segmap.records:
                    mask = f.segmap.ids == r.id
                    assert len(np.unique(keys[mask])) == 1
                    assert len(np.unique(f.region_map[mask])) == 1
                # labeling covers every segment with a live region
                assert f.labeling.region_of.shape[0] == f.segmap.n_segments
                assert set(np.unique(f.labeling.region_of)) == set(
                    range(f.labeling.n_regions)
                )

    def test_translating_segment_counts_in_budget(self):
        for seed in range(8):
            for f in generate_clip(toy_translating_spec(seed)):
                n_blank = sum(
                    1 for r in f.segmap.records if r.kind == LineClass.BLANK
                )
                assert 8 <= n_blank <= 15, f"seed {seed}: {n_blank} segments"

    def test_occlusion_splits_region_into_fragments(self):
        for seed in range(10):
            spec = toy_occlusion_spec(seed)
            big_gid = 1  # the wide region is the first shape's only region
            frames = generate_clip(spec)
            # frame 0: unoccluded
            first = oracles.flood_fill_components(frames[0].region_map == big_gid)
            assert len(first) == 1, f"seed {seed}"
            # some later frame: >= 3 fragments
            best = max(
                len(oracles.flood_fill_components(f.region_map == big_gid))
                for f in frames[1:]
            )
            assert best >= 3, f"seed {seed}: best split {best}"

    def test_gt_colored_round_trip(self):
        f = generate_clip(toy_translating_spec(2))[0]
        gt = gt_colored(f)
        # gt keeps lines black and fills each segment with its region color
        assert (gt.pixels[f.segmap.ids == -1] == 0).all()
        lab = f.labeling
        for r in f.segmap.records:
            mask = f.segmap.ids == r.id
            expected = lab.color_of_region[lab.region_of[r.id]]
            assert (gt.pixels[mask] == expected).all()
