"""Acceptance suite: one test per criterion, one printed pass/fail line
each. Run with `pytest tests/test_acceptance.py -v -s`.

The trained model is a session fixture (one seeded desk-profile training
run shared by the identity, toy-learning, and inclusion-advantage
criteria)."""

import time
from pathlib import Path

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from inkprop import pngio
from inkprop.augment import (
    AugmentConfig,
    merge_labels,
    minpool_resize,
    nn_resize_classes,
    sample_interval,
)
from inkprop.autodiff import Tensor, conv2d, deformable_conv, load_params, save_params
from inkprop.flowwarp import FlowField, recolor_regions, warp_colors
from inkprop.gradsuite import full_pipeline_check, op_checks
from inkprop.matchnet import ModelConfig, hu_match, match_pair, propagate_clip
from inkprop.matchnet.pipeline import SimilarityMatrix, propagate_colors
from inkprop.matchnet.train import train_toy
from inkprop.metrics import evaluate_clip, evaluate_frame
from inkprop.raster import (
    LineArtRaster,
    LineClass,
    RegionLabeling,
    RgbRaster,
    adjacency,
    extract_segments,
    render_lines,
)
from inkprop.synthesis import (
    generate_clip,
    gt_colored,
    toy_occlusion_spec,
    toy_translating_spec,
)

from . import oracles
from .conftest import make_random_flat, make_random_lineart

RESULTS = []


def report(name: str, ok: bool, detail: str = ""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else "")
    print("\n" + line)
    RESULTS.append(line)
    assert ok, line


@pytest.fixture(scope="session")
def desk_cfg():
    return ModelConfig.desk()


TOY_AUG = AugmentConfig(
    translation=(-4.0, 4.0), rotation=(-0.1, 0.1), resize=(1.0, 1.0), crop=56
)


@pytest.fixture(scope="session")
def toy_training(desk_cfg, tmp_path_factory):
    """One seeded training run on the 2-color translating-shapes dataset:
    20 train clips, 5 held-out, 64x64, 8-15 segments per frame."""
    train_clips = [generate_clip(toy_translating_spec(s)) for s in range(20)]
    held = [generate_clip(toy_translating_spec(100 + s)) for s in range(5)]
    with threadpool_limits(limits=1):  # single CPU core, per the criterion
        store, stats = train_toy(
            train_clips,
            desk_cfg,
            TOY_AUG,
            steps=2000,
            seed=7,
            lr=1e-3,
            eval_clips=held,
            eval_every=100,
            target_accuracy=0.95,
            min_steps=1000,
            lr_decay_step=500,
        )
    ckpt = tmp_path_factory.mktemp("model") / "toy.ckpt"
    save_params(store, ckpt, meta={"profile": "desk"})
    return store, stats, ckpt


@pytest.fixture(scope="session")
def advantage_training(desk_cfg):
    """The occlusion-experiment model: trained on a mix of translating and
    occlusion-style clips (training seeds disjoint from the 10 evaluation
    clips), mirroring the paper's occlusion-heavy training distribution."""
    mix = [generate_clip(toy_translating_spec(s)) for s in range(14)] + [
        generate_clip(toy_occlusion_spec(1000 + s)) for s in range(6)
    ]
    held = [generate_clip(toy_translating_spec(100 + s)) for s in range(3)] + [
        generate_clip(toy_occlusion_spec(2000 + s)) for s in range(2)
    ]
    store, stats = train_toy(
        mix,
        desk_cfg,
        TOY_AUG,
        steps=2000,
        seed=11,
        lr=1e-3,
        eval_clips=held,
        eval_every=100,
        target_accuracy=0.95,
        min_steps=500,
        lr_decay_step=500,
    )
    return store, stats


class TestGradientSuite:
    def test_gradient_suite(self):
        t0 = time.time()
        worst = 0.0
        for name, err in op_checks(np.random.default_rng(0)):
            assert err < 1e-4, f"{name}: {err:.3e}"
            worst = max(worst, err)
        pipeline_err = full_pipeline_check(profile="tiny", seed=0)
        worst = max(worst, pipeline_err)
        elapsed = time.time() - t0
        report(
            "gradient suite: ops + full pipeline < 1e-4",
            worst < 1e-4 and elapsed < 60.0,
            f"max rel err {worst:.2e}, {elapsed:.1f}s",
        )


class TestOracleEquivalence:
    def test_oracles_on_randomized_frames(self):
        rng = np.random.default_rng(2024)
        frames = 0

        # segment extraction vs BFS flood fill (independent of scipy.label)
        for _ in range(15):
            la = make_random_lineart(rng, 20, 20, color_lines=True)
            seg = extract_segments(la)
            expected = oracles.partition_by_class(la.classes, LineClass.BLACK)
            got = [
                {(y, x) for y, x in zip(*np.nonzero(seg.ids == r.id))}
                for r in seg.records
            ]
            assert sorted(map(sorted, got)) == sorted(map(sorted, expected))
            frames += 1

        # adjacency vs O(P^2) all-pairs scan
        for _ in range(15):
            la = make_random_lineart(rng, 13, 13, color_lines=True)
            seg = extract_segments(la)
            assert adjacency(seg) == oracles.brute_adjacency(seg.ids)
            frames += 1

        # integer-flow warping vs array shift
        for _ in range(10):
            img = rng.integers(0, 255, size=(16, 16, 3)).astype(np.uint8)
            dx, dy = int(rng.integers(-5, 6)), int(rng.integers(-5, 6))
            v = np.zeros((16, 16, 2))
            v[..., 0] = dx
            v[..., 1] = dy
            out = warp_colors(
                RgbRaster(pixels=img), FlowField(vectors=v), background=(7, 7, 7)
            )
            assert (out.pixels == oracles.shift_image(img, dx, dy, 7)).all()
            frames += 1

        # all five metrics vs exact rational counting
        from fractions import Fraction

        from inkprop.raster import pack_rgb

        for _ in range(10):
            gt = make_random_flat(rng, 20, 20, n_colors=3)
            pred_px = gt.pixels.copy()
            y0, y1 = sorted(rng.integers(0, 20, size=2))
            x0, x1 = sorted(rng.integers(0, 20, size=2))
            pred_px[y0 : y1 + 1, x0 : x1 + 1] = rng.integers(0, 255, size=3)
            pred = RgbRaster(pixels=pred_px)
            bg_color = tuple(int(v) for v in gt.pixels[0, 0])
            key = (bg_color[0] << 16) | (bg_color[1] << 8) | bg_color[2]
            bg_mask = pack_rgb(gt.pixels) == key
            acc, acc_t, pix, pix_f, n_seg, n_big = oracles.exact_segment_metrics(
                pred.pixels, gt.pixels, bg_mask
            )
            ev = evaluate_frame(pred, gt, background=bg_color)
            assert Fraction(ev.seg_correct, max(ev.seg_total, 1)) == acc
            assert (
                Fraction(ev.seg_correct_thres, max(ev.seg_total_thres, 1)) == acc_t
            )
            assert Fraction(ev.pix_correct, ev.pix_total) == pix
            if ev.pix_f_total:
                assert Fraction(ev.pix_f_correct, ev.pix_f_total) == pix_f
            pred_bg = pack_rgb(pred.pixels) == key
            assert ev.pix_b_miou == float(
                oracles.exact_background_iou(pred_bg, bg_mask)
            )
            frames += 1

        report(
            "oracle equivalence: extraction/adjacency/warp/metrics",
            frames >= 50,
            f"{frames} randomized frames",
        )


class TestIdentityMatching:
    def _self_pair_acc(self, backend, store, cfg):
        preds, gts = [], []
        rng = np.random.default_rng(3)
        for s in range(5):
            for frame in generate_clip(toy_translating_spec(200 + s)):
                if backend == "hu":
                    res = hu_match((frame.segmap, frame.labeling), frame.segmap)
                else:
                    res, _, _ = match_pair(
                        frame.segmap,
                        frame.labeling,
                        frame.lines,
                        frame.lines,
                        store,
                        cfg,
                        rng,
                    )
                preds.append(res.raster)
                gts.append(gt_colored(frame))
        agg, _ = evaluate_clip(preds, gts)
        return agg.acc, len(preds)

    def test_hu_identity(self, desk_cfg):
        acc, n = self._self_pair_acc("hu", None, desk_cfg)
        report("identity matching: hu_match Acc = 1.0", acc == 1.0, f"{n} frames")

    def test_neural_identity(self, desk_cfg, toy_training):
        store, stats, _ = toy_training
        assert stats.steps_run >= 500
        acc, n = self._self_pair_acc("neural", store, desk_cfg)
        report(
            "identity matching: neural Acc = 1.0 after >= 500 steps",
            acc == 1.0,
            f"{n} frames, {stats.steps_run} steps",
        )


class TestToyLearning:
    def test_heldout_accuracy_within_budget(self, toy_training):
        _, stats, _ = toy_training
        final_acc = stats.eval_accuracy[-1]
        ok = (
            final_acc >= 0.95
            and stats.steps_run <= 2000
            and stats.seconds <= 600.0
        )
        report(
            "toy learning: held-out Acc >= 0.95 in <= 2000 steps, <= 10 min",
            ok,
            f"acc {final_acc:.4f}, {stats.steps_run} steps, {stats.seconds:.0f}s, 1 core",
        )


class TestInclusionAdvantage:
    def test_occlusion_gap(self, desk_cfg, advantage_training):
        store, _ = advantage_training
        gaps = []
        for seed in range(10):
            frames = generate_clip(toy_occlusion_spec(seed))
            # construction guarantee: some frame splits the wide region
            best = max(
                len(oracles.flood_fill_components(f.region_map == 1))
                for f in frames[1:]
            )
            assert best >= 3
            lines = [f.lines for f in frames]
            ref = gt_colored(frames[0])
            gts = [gt_colored(f) for f in frames]
            accs = {}
            for backend in ("neural", "hu"):
                outs, _ = propagate_clip(
                    lines,
                    ref,
                    store if backend == "neural" else None,
                    desk_cfg,
                    mode="chain",
                    backend=backend,
                    rng=np.random.default_rng(seed),
                )
                agg, _ = evaluate_clip(outs[1:], gts[1:])
                accs[backend] = agg.acc
            gaps.append(accs["neural"] - accs["hu"])
        mean_gap = float(np.mean(gaps))
        report(
            "inclusion advantage: neural Acc - hu Acc >= 0.10 on occlusion clips",
            mean_gap >= 0.10,
            f"mean gap {mean_gap:+.3f} over 10 clips",
        )


class TestEq1Reduction:
    def test_zero_offset_bitwise(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            c, co = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            k = int(rng.choice([1, 3]))
            h, w = int(rng.integers(4, 10)), int(rng.integers(4, 10))
            x = Tensor(rng.normal(size=(c, h, w)))
            wt = Tensor(rng.normal(size=(co, c, k, k)))
            off = Tensor(np.zeros((2 * k * k, h, w)))
            a = deformable_conv(x, wt, off)
            b = conv2d(x, wt, stride=1, padding=k // 2)
            assert (a.data == b.data).all()
        report("Eq.1 reduction: zero-offset deformable == conv2d bit-for-bit", True, "100 cases")


class TestThresholdSemantics:
    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(5)
        classes = np.zeros((8, 17), dtype=np.uint8)
        classes[:, 5] = LineClass.BLACK
        classes[:, 11] = LineClass.BLACK
        segmap = extract_segments(LineArtRaster(classes))
        lab = RegionLabeling(
            region_of=np.array([0, 1, 2]),
            n_regions=3,
            color_of_region=np.arange(9, dtype=np.uint8).reshape(3, 3),
        )
        probs = rng.dirichlet(np.ones(3), size=3)
        S = SimilarityMatrix(logits=Tensor(np.log(probs)), probs=Tensor(probs))
        counts = []
        for thr in (0.0, 0.25, 0.5, 0.75, 1.001):
            res = propagate_colors(S, lab, segmap, threshold=thr)
            counts.append(len(res.unmatched))
        ok = counts[0] == 0 and counts[-1] == 3 and counts == sorted(counts)
        report(
            "threshold semantics: 0 -> none unmatched, >1 -> all, monotone",
            ok,
            f"unmatched counts {counts}",
        )


class TestAugmentationStatistics:
    def test_merge_frequency(self):
        lab = RegionLabeling(region_of=np.array([0, 1]), n_regions=2)
        rng = np.random.default_rng(42)
        merges = sum(
            merge_labels(lab, {(0, 1): 4}, 0.2, rng)[0].n_regions == 1
            for _ in range(10_000)
        )
        freq = merges / 10_000
        report(
            "augmentation: merge frequency 0.2 +- 0.01 over 10k trials",
            abs(freq - 0.2) <= 0.01,
            f"{freq:.4f}",
        )

    def test_interval_frequencies(self):
        rng = np.random.default_rng(11)
        draws = np.array([sample_interval(rng) for _ in range(30_000)])
        freqs = np.bincount(draws, minlength=3) / 30_000
        ok = all(abs(f - 1 / 3) <= 0.01 for f in freqs)
        report(
            "augmentation: interval frequencies 1/3 +- 0.01 over 30k draws",
            ok,
            "freqs " + ", ".join(f"{f:.4f}" for f in freqs),
        )

    def test_minpool_preservation(self):
        from scipy import ndimage

        rng = np.random.default_rng(13)
        for _ in range(100):
            la = make_random_lineart(rng, 48, 48, color_lines=True)
            s = rng.uniform(1 / 3, 1 / 2)
            oh = ow = max(1, round(48 * s))
            mp = minpool_resize(la, oh, ow).classes != LineClass.BLANK
            nn = nn_resize_classes(la.classes, oh, ow) != LineClass.BLANK
            dilated = ndimage.binary_dilation(mp, structure=np.ones((3, 3)))
            assert (dilated >= nn).all()
        report(
            "augmentation: min-pool line preservation on 100 random resizes",
            True,
            "dilate(minpool,1) covers nearest-neighbor lines",
        )


class TestRecolorization:
    def test_k_1_to_64(self):
        rng = np.random.default_rng(17)
        for K in range(1, 65):
            pal = recolor_regions(K, rng)
            colors = pal.colors.astype(float)
            assert len({tuple(c) for c in pal.colors}) == K  # distinct
            n = int(round(255.0 / pal.side))
            for c in colors:  # at cube centers, within rounding
                cell = np.clip(np.floor(c / pal.side), 0, n - 1)
                center = (cell + 0.5) * pal.side
                assert np.abs(c - center).max() <= 0.5 + 1e-9
            # side follows 255*K^(-1/3) on realizable (perfect-cube) grids
            if K in (1, 8, 27, 64):
                assert pal.side == pytest.approx(255.0 * K ** (-1 / 3), rel=1e-12)
            if K > 1:
                d = np.abs(colors[:, None] - colors[None, :]).max(axis=2)
                np.fill_diagonal(d, 1e9)
                assert d.min() >= np.floor(pal.side) - 1
        report(
            "recolorization: K in 1..64 distinct cube centers, side formula",
            True,
            "side = 255/ceil(K^(1/3)), exact at perfect cubes",
        )


class TestDeterminism:
    def test_cli_propagate_seeded_twice(self, tmp_path, toy_training):
        from inkprop.cli import main

        _, _, ckpt = toy_training
        frames_dir = tmp_path / "frames"
        frames_dir.mkdir()
        clip = generate_clip(toy_translating_spec(300))
        for i, f in enumerate(clip):
            pngio.save_rgb(render_lines(f.lines), frames_dir / f"{i:03d}.png")
        ref = tmp_path / "ref.png"
        pngio.save_rgb(gt_colored(clip[0]), ref)

        outs = []
        for which in ("runA", "runB"):
            out = tmp_path / which
            rc = main(
                [
                    "propagate",
                    "--frames", str(frames_dir),
                    "--ref-colors", str(ref),
                    "--backend", "neural",
                    "--checkpoint", str(ckpt),
                    "--seed", "7",
                    "--out", str(out),
                ]
            )
            assert rc == 0
            outs.append(out)
        names = sorted(p.name for p in outs[0].iterdir())
        identical = all(
            (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names
        )
        report(
            "determinism: propagate --seed 7 twice is byte-identical",
            identical,
            f"{len(names)} output files",
        )
