from fractions import Fraction

import numpy as np
import pytest

from inkprop.errors import DimensionMismatch, LengthMismatch
from inkprop.metrics import (
    accuracy_by_size,
    evaluate_clip,
    evaluate_frame,
    quantile_size_boundaries,
    report_text,
)
from inkprop.raster import RgbRaster

from . import oracles


def raster(arr):
    return RgbRaster(pixels=np.asarray(arr, dtype=np.uint8))


def frame_with_two_segments():
    """12x12 white background, a 10x10 red square and a 2x2 blue square."""
    img = np.full((12, 20, 3), 255, dtype=np.uint8)
    img[1:11, 1:11] = (200, 0, 0)  # area 100
    img[3:5, 14:16] = (0, 0, 200)  # area 4
    return img


class TestEvaluateFrame:
    def test_identity_all_ones(self, rng):
        img = rng.integers(0, 255, size=(16, 16, 3)).astype(np.uint8)
        ev = evaluate_frame(raster(img), raster(img))
        assert ev.acc == 1.0
        assert ev.acc_thres == 1.0
        assert ev.pix_acc == 1.0
        assert ev.pix_f_acc == 1.0
        assert ev.pix_b_miou == 1.0

    def test_tiny_wrong_segment_filtered_by_thres(self):
        gt = frame_with_two_segments()
        pred = gt.copy()
        pred[3:5, 14:16] = (0, 200, 0)  # wrong color on the 4-px segment
        ev = evaluate_frame(raster(pred), raster(gt), background=(255, 255, 255))
        assert ev.acc == 0.5
        assert ev.acc_thres == 1.0
        assert ev.seg_total == 2 and ev.seg_total_thres == 1

    def test_pixel_accuracy_counts(self):
        # 10x10 frame, 30 foreground px, 6 wrong foreground px
        gt = np.full((10, 10, 3), 255, dtype=np.uint8)
        gt[0:3, 0:10] = (100, 0, 0)  # 30 fg px
        pred = gt.copy()
        pred[0, 0:6] = (0, 100, 0)  # 6 wrong
        ev = evaluate_frame(raster(pred), raster(gt), background=(255, 255, 255))
        assert ev.pix_acc == pytest.approx(0.94)
        assert ev.pix_f_acc == pytest.approx(0.8)

    def test_majority_vote_grades_pixel_methods(self):
        gt = frame_with_two_segments()
        pred = gt.copy()
        pred[1:11, 1:6] = (200, 0, 0)
        pred[1:3, 6:11] = (9, 9, 9)  # minority corruption of the red segment
        ev = evaluate_frame(raster(pred), raster(gt), background=(255, 255, 255))
        assert ev.acc == 1.0  # majority still red

    def test_background_miou(self):
        gt = np.full((4, 4, 3), 255, dtype=np.uint8)
        gt[0:2, 0:2] = (1, 2, 3)
        pred = np.full((4, 4, 3), 255, dtype=np.uint8)
        pred[0:2, 0:4] = (1, 2, 3)
        # gt bg 12 px, pred bg 8 px, intersection 8, union 12
        ev = evaluate_frame(raster(pred), raster(gt), background=(255, 255, 255))
        assert ev.pix_b_miou == pytest.approx(8 / 12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            evaluate_frame(
                raster(np.zeros((4, 4, 3))), raster(np.zeros((4, 5, 3)))
            )

    def test_matches_exact_rational_oracle(self, rng):
        from .conftest import make_random_flat

        for _ in range(10):
            gt = make_random_flat(rng, 20, 20, n_colors=3)
            pred_px = gt.pixels.copy()
            # corrupt a random rectangle
            y0, y1 = sorted(rng.integers(0, 20, size=2))
            x0, x1 = sorted(rng.integers(0, 20, size=2))
            pred_px[y0 : y1 + 1, x0 : x1 + 1] = rng.integers(0, 255, size=3)
            pred = raster(pred_px)
            bg_color = tuple(int(v) for v in gt.pixels[0, 0])
            from inkprop.raster import pack_rgb

            bg_mask = pack_rgb(gt.pixels) == (
                (bg_color[0] << 16) | (bg_color[1] << 8) | bg_color[2]
            )
            acc, acc_thres, pix_acc, pix_f, n_seg, n_big = oracles.exact_segment_metrics(
                pred.pixels, gt.pixels, bg_mask
            )
            ev = evaluate_frame(pred, gt, background=bg_color)
            assert Fraction(ev.seg_correct, max(ev.seg_total, 1)) == acc
            assert ev.seg_total == n_seg and ev.seg_total_thres == n_big
            assert Fraction(ev.pix_correct, ev.pix_total) == pix_acc
            if ev.pix_f_total:
                assert Fraction(ev.pix_f_correct, ev.pix_f_total) == pix_f
            pred_bg = pack_rgb(pred.pixels) == (
                (bg_color[0] << 16) | (bg_color[1] << 8) | bg_color[2]
            )
            assert ev.pix_b_miou == pytest.approx(
                float(oracles.exact_background_iou(pred_bg, bg_mask))
            )

    def test_acc_thres_uses_subset_of_acc_segments(self, rng):
        gt = frame_with_two_segments()
        ev = evaluate_frame(raster(gt), raster(gt), background=(255, 255, 255))
        assert ev.seg_total_thres <= ev.seg_total


class TestEvaluateClip:
    def test_single_frame_equals_frame_metrics(self, rng):
        img = rng.integers(0, 255, size=(8, 8, 3)).astype(np.uint8)
        agg, frames = evaluate_clip([raster(img)], [raster(img)])
        assert agg.acc == frames[0].acc
        assert agg.pix_b_miou == frames[0].pix_b_miou

    def test_pooled_segment_accuracy(self):
        # frame A: 10 segments all correct; frame B: 10 segments, 5 correct
        def grid_frame(colors):
            img = np.full((22, 12, 3), 255, dtype=np.uint8)
            for i, c in enumerate(colors):
                y = 1 + 2 * i
                img[y, 1:11] = c
            return img

        gt_colors = [(ci * 20 + 10, 0, 0) for ci in range(10)]
        gt = grid_frame(gt_colors)
        pred_good = gt.copy()
        bad_colors = [
            c if i % 2 == 0 else (0, 200, 0) for i, c in enumerate(gt_colors)
        ]
        pred_bad = grid_frame(bad_colors)
        agg, frames = evaluate_clip(
            [raster(pred_good), raster(pred_bad)],
            [raster(gt), raster(gt)],
            background=(255, 255, 255),
        )
        assert frames[0].acc == 1.0
        assert frames[1].acc == 0.5
        assert agg.acc == 0.75  # pooled counts, not averaged fractions

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            evaluate_clip([], [])
        with pytest.raises(LengthMismatch):
            evaluate_clip([raster(np.zeros((2, 2, 3)))], [])


class TestAccuracyBySize:
    def test_single_bin_equals_overall(self):
        gt = frame_with_two_segments()
        pred = gt.copy()
        pred[3:5, 14:16] = (0, 200, 0)
        bins = accuracy_by_size(
            raster(pred), raster(gt), [1000.0], background=(255, 255, 255)
        )
        assert bins[0].count == 2
        assert bins[0].accuracy == 0.5

    def test_boundary_area_9_vs_sqrt10(self):
        img = np.full((8, 8, 3), 255, dtype=np.uint8)
        img[0:3, 0:3] = (10, 10, 10)  # area 9, sqrt = 3 < sqrt(10)
        bins = accuracy_by_size(
            raster(img), raster(img), [np.sqrt(10.0)], background=(255, 255, 255)
        )
        assert bins[0].count == 1
        assert bins[1].count == 0

    def test_quantile_boundaries_balance_counts(self, rng):
        areas = list(rng.integers(4, 4000, size=41))
        while len(set(areas)) != len(areas):
            areas = list(rng.integers(4, 4000, size=41))
        cuts = quantile_size_boundaries(areas, 4)
        edges = [0.0, *cuts, np.inf]
        counts = []
        s = np.sqrt(np.asarray(areas, dtype=float))
        for lo, hi in zip(edges[:-1], edges[1:]):
            counts.append(int(((s >= lo) & (s < hi)).sum()))
        assert max(counts) - min(counts) <= 1

    def test_increasing_boundaries_required(self):
        img = raster(np.zeros((4, 4, 3)))
        with pytest.raises(ValueError):
            accuracy_by_size(img, img, [5.0, 2.0])


def test_report_text_has_all_columns(rng):
    img = rng.integers(0, 255, size=(6, 6, 3)).astype(np.uint8)
    agg, _ = evaluate_clip([raster(img)], [raster(img)])
    text = report_text(agg)
    for col in ("Acc", "Acc-Thres", "Pix-Acc", "Pix-F-Acc", "Pix-B-MIoU"):
        assert col in text
