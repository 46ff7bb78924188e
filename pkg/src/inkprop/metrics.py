"""Evaluation metrics for colorized frames.

Segment-wise: Acc (per-color connected components of the ground truth,
majority-color vote) and Acc-Thres (segments under 10 px dropped).
Pixel-wise: Pix-Acc, Pix-F-Acc (foreground only), and Pix-B-MIoU
(background-mask IoU, averaged per frame). Colorized color lines share
their region's color, so deriving segments from the colorized ground
truth merges them automatically and no method is penalized for skipping
color-line prediction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, LengthMismatch
from .raster import RgbRaster, background_mask, pack_rgb, _label_components

ACC_THRES_MIN_AREA = 10


@dataclass(frozen=True)
class SizeBin:
    lo: float  # sqrt-area bounds, lo <= sqrt(S) < hi
    hi: float
    accuracy: float
    count: int


@dataclass(frozen=True)
class FrameEval:
    acc: float
    acc_thres: float
    pix_acc: float
    pix_f_acc: float
    pix_b_miou: float
    size_bins: tuple[SizeBin, ...] = ()
    # raw tallies so clips pool counts, not float averages
    seg_correct: int = 0
    seg_total: int = 0
    seg_correct_thres: int = 0
    seg_total_thres: int = 0
    pix_correct: int = 0
    pix_total: int = 0
    pix_f_correct: int = 0
    pix_f_total: int = 0

    def to_json(self) -> dict:
        return {
            "acc": self.acc,
            "acc_thres": self.acc_thres,
            "pix_acc": self.pix_acc,
            "pix_f_acc": self.pix_f_acc,
            "pix_b_miou": self.pix_b_miou,
            "size_bins": [
                {"lo": b.lo, "hi": b.hi, "accuracy": b.accuracy, "count": b.count}
                for b in self.size_bins
            ],
        }


def _gt_segments(gt: RgbRaster, bg: np.ndarray) -> list[tuple[int, np.ndarray]]:
    """(packed color, pixel mask) per 4-connected same-color component of
    the non-background ground truth."""
    keys = pack_rgb(gt.pixels)
    masked = np.where(bg, -1, keys)
    out = []
    for key in np.unique(masked):
        if key == -1:
            continue
        labeled, n = _label_components(masked == key)
        for i in range(1, n + 1):
            out.append((int(key), labeled == i))
    return out


def _majority_color(pred_keys: np.ndarray, mask: np.ndarray) -> int:
    vals, counts = np.unique(pred_keys[mask], return_counts=True)
    return int(vals[counts.argmax()])


def evaluate_frame(
    pred: RgbRaster,
    gt: RgbRaster,
    background: tuple[int, int, int] | None = None,
    size_bins: list[float] | None = None,
) -> FrameEval:
    """All five metrics for one frame (plus optional per-size accuracies).

    ``background`` overrides detection (alpha-0, else majority border
    color of the ground truth); background pixels define the masks for
    Pix-B-MIoU and are excluded from gt segments and foreground."""
    if pred.pixels.shape != gt.pixels.shape:
        raise DimensionMismatch("pred and gt dimensions differ")
    if background is not None:
        bg = pack_rgb(gt.pixels) == (
            (background[0] << 16) | (background[1] << 8) | background[2]
        )
    else:
        bg = background_mask(gt)

    pred_keys = pack_rgb(pred.pixels)
    gt_keys = pack_rgb(gt.pixels)

    segments = _gt_segments(gt, bg)
    correct_mask = [(_majority_color(pred_keys, m) == c) for c, m in segments]
    areas = [int(m.sum()) for _, m in segments]
    seg_correct = sum(correct_mask)
    seg_total = len(segments)
    big = [i for i, a in enumerate(areas) if a >= ACC_THRES_MIN_AREA]
    seg_correct_thres = sum(correct_mask[i] for i in big)
    seg_total_thres = len(big)

    eq = pred_keys == gt_keys
    pix_correct = int(eq.sum())
    pix_total = eq.size
    fg = ~bg
    pix_f_correct = int((eq & fg).sum())
    pix_f_total = int(fg.sum())

    if background is not None:
        pred_bg = pred_keys == (
            (background[0] << 16) | (background[1] << 8) | background[2]
        )
    else:
        bg_colors = np.unique(gt_keys[bg])
        pred_bg = np.isin(pred_keys, bg_colors)
    inter = int((pred_bg & bg).sum())
    union = int((pred_bg | bg).sum())
    miou = inter / union if union else 1.0

    bins: tuple[SizeBin, ...] = ()
    if size_bins is not None:
        bins = _bin_accuracies(areas, correct_mask, size_bins)

    return FrameEval(
        acc=seg_correct / seg_total if seg_total else 1.0,
        acc_thres=seg_correct_thres / seg_total_thres if seg_total_thres else 1.0,
        pix_acc=pix_correct / pix_total,
        pix_f_acc=pix_f_correct / pix_f_total if pix_f_total else 1.0,
        pix_b_miou=miou,
        size_bins=bins,
        seg_correct=seg_correct,
        seg_total=seg_total,
        seg_correct_thres=seg_correct_thres,
        seg_total_thres=seg_total_thres,
        pix_correct=pix_correct,
        pix_total=pix_total,
        pix_f_correct=pix_f_correct,
        pix_f_total=pix_f_total,
    )


def _bin_accuracies(areas, correct, boundaries) -> tuple[SizeBin, ...]:
    edges = [0.0, *boundaries, np.inf]
    out = []
    sqrt_areas = np.sqrt(np.asarray(areas, dtype=float))
    for lo, hi in zip(edges[:-1], edges[1:]):
        idx = [i for i, s in enumerate(sqrt_areas) if lo <= s < hi]
        n_ok = sum(correct[i] for i in idx)
        out.append(
            SizeBin(
                lo=lo,
                hi=hi,
                accuracy=n_ok / len(idx) if idx else 1.0,
                count=len(idx),
            )
        )
    return tuple(out)


def quantile_size_boundaries(areas: list[int], n_bins: int) -> list[float]:
    """sqrt-area split points giving (nearly) equal segment counts per bin."""
    if n_bins < 2:
        return []
    s = np.sort(np.sqrt(np.asarray(areas, dtype=float)))
    cuts = []
    for b in range(1, n_bins):
        i = round(b * len(s) / n_bins)
        lo = s[i - 1] if i > 0 else 0.0
        hi = s[i] if i < len(s) else s[-1] + 1.0
        cuts.append((lo + hi) / 2.0)
    return cuts


def accuracy_by_size(
    pred: RgbRaster,
    gt: RgbRaster,
    boundaries: list[float],
    background: tuple[int, int, int] | None = None,
) -> tuple[SizeBin, ...]:
    """Per-bin segment accuracy; each gt segment lands in the bin holding
    its sqrt-area."""
    if sorted(boundaries) != list(boundaries):
        raise ValueError("bin boundaries must be strictly increasing")
    return evaluate_frame(pred, gt, background, size_bins=boundaries).size_bins


def evaluate_clip(
    preds: list[RgbRaster],
    gts: list[RgbRaster],
    background: tuple[int, int, int] | None = None,
) -> tuple[FrameEval, list[FrameEval]]:
    """Pool segment and pixel tallies over all frames; Pix-B-MIoU averages
    per frame (it is a mean by name)."""
    if len(preds) == 0 or len(preds) != len(gts):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(gts)} ground truths")
    frames = [evaluate_frame(p, g, background) for p, g in zip(preds, gts)]
    seg_c = sum(f.seg_correct for f in frames)
    seg_t = sum(f.seg_total for f in frames)
    seg_ct = sum(f.seg_correct_thres for f in frames)
    seg_tt = sum(f.seg_total_thres for f in frames)
    pix_c = sum(f.pix_correct for f in frames)
    pix_t = sum(f.pix_total for f in frames)
    pf_c = sum(f.pix_f_correct for f in frames)
    pf_t = sum(f.pix_f_total for f in frames)
    agg = FrameEval(
        acc=seg_c / seg_t if seg_t else 1.0,
        acc_thres=seg_ct / seg_tt if seg_tt else 1.0,
        pix_acc=pix_c / pix_t if pix_t else 1.0,
        pix_f_acc=pf_c / pf_t if pf_t else 1.0,
        pix_b_miou=float(np.mean([f.pix_b_miou for f in frames])),
        seg_correct=seg_c,
        seg_total=seg_t,
        seg_correct_thres=seg_ct,
        seg_total_thres=seg_tt,
        pix_correct=pix_c,
        pix_total=pix_t,
        pix_f_correct=pf_c,
        pix_f_total=pf_t,
    )
    return agg, frames


def report_text(agg: FrameEval) -> str:
    """Plain-text table mirroring the benchmark column names."""
    header = f"{'Acc':>8} {'Acc-Thres':>10} {'Pix-Acc':>8} {'Pix-F-Acc':>10} {'Pix-B-MIoU':>11}"
    row = (
        f"{agg.acc:8.4f} {agg.acc_thres:10.4f} {agg.pix_acc:8.4f} "
        f"{agg.pix_f_acc:10.4f} {agg.pix_b_miou:11.4f}"
    )
    return header + "\n" + row
