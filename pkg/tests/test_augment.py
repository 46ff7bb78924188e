import numpy as np
import pytest
from scipy import ndimage

from inkprop.augment import (
    AugmentConfig,
    geo_augment,
    merge_labels,
    minpool_resize,
    nn_resize_classes,
    sample_interval,
    transform_lines_minpool,
)
from inkprop.raster import (
    LineArtRaster,
    LineClass,
    RegionLabeling,
    adjacency,
    extract_segments,
    region_adjacency,
)
from inkprop.synthesis import generate_clip, toy_translating_spec

from .conftest import make_random_lineart


def two_region_labeling():
    return RegionLabeling(region_of=np.array([0, 1]), n_regions=2)


class TestMergeLabels:
    def test_p_zero_identity(self, rng):
        lab = two_region_labeling()
        out, mapping = merge_labels(lab, {(0, 1): 4}, 0.0, rng)
        assert out is lab
        assert mapping.tolist() == [0, 1]

    def test_p_one_forced_merge(self, rng):
        lab = two_region_labeling()
        out, mapping = merge_labels(lab, {(0, 1): 4}, 1.0, rng)
        assert out.n_regions == 1
        assert mapping.tolist() == [0, 0]

    def test_union_find_chains(self):
        # pairs (0,1) then (1,2): the second union merges the whole chain
        lab = RegionLabeling(region_of=np.array([0, 1, 2]), n_regions=3)
        rng = np.random.default_rng(0)
        out, mapping = merge_labels(lab, {(0, 1): 1, (1, 2): 1}, 1.0, rng)
        assert out.n_regions == 1
        assert set(mapping.tolist()) == {0}

    def test_merge_frequency_20_percent(self):
        # acceptance-grade statistic: 10k trials on one adjacent pair
        lab = two_region_labeling()
        rng = np.random.default_rng(42)
        merges = 0
        for _ in range(10_000):
            out, _ = merge_labels(lab, {(0, 1): 4}, 0.2, rng)
            merges += out.n_regions == 1
        assert abs(merges / 10_000 - 0.2) <= 0.01

    def test_output_is_coarsening(self, rng):
        frames = generate_clip(toy_translating_spec(3))
        f = frames[0]
        adj = region_adjacency(adjacency(f.segmap, max_chebyshev=3), f.labeling)
        assert adj, "toy frame should have adjacent regions at cheb-3 reach"
        out, mapping = merge_labels(f.labeling, adj, 0.5, rng)
        # mapping is total and surjective onto the new index range
        assert mapping.shape == (f.labeling.n_regions,)
        assert set(mapping.tolist()) == set(range(out.n_regions))
        # segment-level labels factor through the mapping
        assert (out.region_of == mapping[f.labeling.region_of]).all()

    def test_deterministic_under_seed(self):
        frames = generate_clip(toy_translating_spec(5))
        f = frames[0]
        adj = region_adjacency(adjacency(f.segmap, max_chebyshev=3), f.labeling)
        a, ma = merge_labels(f.labeling, adj, 0.4, np.random.default_rng(9))
        b, mb = merge_labels(f.labeling, adj, 0.4, np.random.default_rng(9))
        assert (ma == mb).all()
        assert a.n_regions == b.n_regions


class TestSampleInterval:
    def test_deterministic_sequence(self):
        a = [sample_interval(np.random.default_rng(7)) for _ in range(1)]
        b = [sample_interval(np.random.default_rng(7)) for _ in range(1)]
        assert a == b

    def test_uniform_over_three(self):
        rng = np.random.default_rng(11)
        draws = [sample_interval(rng) for _ in range(30_000)]
        counts = np.bincount(draws, minlength=3)
        assert set(np.unique(draws)) == {0, 1, 2}
        for c in counts:
            assert abs(c / 30_000 - 1 / 3) <= 0.01


class TestMinPool:
    def test_one_px_line_survives_half_scale(self):
        classes = np.zeros((32, 32), dtype=np.uint8)
        classes[15, :] = LineClass.BLACK
        out = minpool_resize(LineArtRaster(classes), 16, 16)
        assert (out.classes == LineClass.BLACK).any()

    def test_nn_would_lose_the_line(self):
        classes = np.zeros((32, 32), dtype=np.uint8)
        classes[14, :] = LineClass.BLACK  # off the center-sample lattice
        nn = nn_resize_classes(classes, 16, 16)
        mp = minpool_resize(LineArtRaster(classes), 16, 16).classes
        assert not (nn == LineClass.BLACK).any()
        assert (mp == LineClass.BLACK).any()

    def test_black_beats_color_in_footprint(self):
        classes = np.zeros((2, 2), dtype=np.uint8)
        classes[0, 0] = LineClass.RED
        classes[0, 1] = LineClass.BLACK
        out = minpool_resize(LineArtRaster(classes), 1, 1)
        assert out.classes[0, 0] == LineClass.BLACK

    def test_dilated_minpool_covers_nn(self, rng):
        for _ in range(30):
            la = make_random_lineart(rng, 48, 48, color_lines=True)
            s = rng.uniform(1 / 3, 1 / 2)
            oh, ow = max(1, round(48 * s)), max(1, round(48 * s))
            mp = minpool_resize(la, oh, ow).classes != LineClass.BLANK
            nn = nn_resize_classes(la.classes, oh, ow) != LineClass.BLANK
            dilated = ndimage.binary_dilation(mp, structure=np.ones((3, 3)))
            assert (dilated >= nn).all()

    def test_affine_minpool_keeps_one_px_line(self):
        classes = np.zeros((40, 40), dtype=np.uint8)
        classes[19, 2:38] = LineClass.BLACK
        out = transform_lines_minpool(LineArtRaster(classes), 0.5, 0.3, 1.0, -2.0)
        assert (out.classes == LineClass.BLACK).any()


def identity_config(size):
    return AugmentConfig(
        merge_probability=0.0,
        translation=(0.0, 0.0),
        rotation=(0.0, 0.0),
        resize=(1.0, 1.0),
        crop=size,
    )


class TestGeoAugment:
    def test_identity_draws_leave_pair_unchanged(self):
        frames = generate_clip(toy_translating_spec(1))
        pair = (frames[0], frames[1])
        rng = np.random.default_rng(0)
        out = geo_augment(pair, identity_config(64), rng)
        for before, after in zip(pair, out):
            assert (before.flat.pixels == after.flat.pixels).all()
            assert (before.lines.classes == after.lines.classes).all()
            assert (before.segmap.ids == after.segmap.ids).all()
            assert (before.region_map == after.region_map).all()

    def test_partition_invariant_after_augment(self):
        frames = generate_clip(toy_translating_spec(2, size=64))
        cfg = AugmentConfig(
            translation=(-5.0, 5.0),
            rotation=(-np.pi / 9, np.pi / 9),
            resize=(0.8, 1.0),
            crop=48,
        )
        rng = np.random.default_rng(3)
        for _ in range(10):
            a, b = geo_augment((frames[0], frames[1]), cfg, rng)
            for f in (a, b):
                sentinel = int((f.segmap.ids == -1).sum())
                total = sum(r.area for r in f.segmap.records) + sentinel
                assert total == 48 * 48

    def test_deterministic_under_seed(self):
        frames = generate_clip(toy_translating_spec(4))
        cfg = AugmentConfig(
            translation=(-4.0, 4.0), rotation=(-0.2, 0.2), resize=(0.8, 1.0), crop=44
        )
        a = geo_augment((frames[0], frames[1]), cfg, np.random.default_rng(5))
        b = geo_augment((frames[0], frames[1]), cfg, np.random.default_rng(5))
        for fa, fb in zip(a, b):
            assert (fa.flat.pixels == fb.flat.pixels).all()
            assert (fa.segmap.ids == fb.segmap.ids).all()

    def test_labeling_regions_survive(self):
        # gentle transforms keep every region alive with lineage intact
        frames = generate_clip(toy_translating_spec(6))
        cfg = AugmentConfig(
            translation=(-2.0, 2.0), rotation=(-0.1, 0.1), resize=(1.0, 1.0), crop=60
        )
        rng = np.random.default_rng(8)
        a, _ = geo_augment((frames[0], frames[1]), cfg, rng)
        assert a.labeling.source_ids is not None
        assert set(a.labeling.source_ids) <= set(frames[0].labeling.source_ids)


class TestConfigRoundTrip:
    def test_json_round_trip(self):
        cfg = AugmentConfig(crop=48, seed=3)
        again = AugmentConfig.from_json(cfg.to_json())
        assert again == cfg
