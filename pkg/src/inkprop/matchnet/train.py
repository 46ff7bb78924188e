"""Toy training: the full inclusion-matching recipe at desk scale.

Per step — sample a clip and an inter-frame interval, geo-augment the
pair, randomly merge adjacent reference labels, recolor the merged
regions onto RGB-cube centers, block-match flow, warp, extract features
both sides, tokenize (reference grouped by the merged labeling),
aggregate with the multiplex transformer, cross-entropy on the
similarity rows, Adam. Deterministic under the seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..augment import AugmentConfig, geo_augment, merge_labels, sample_interval
from ..autodiff import ParamStore, adam_step
from ..errors import DegenerateCrop
from ..flowwarp import estimate_flow, recolor_regions, warp_colors
from ..raster import (
    LineClass,
    adjacency,
    fill_segments,
    region_adjacency,
)
from ..synthesis import PairedFrame
from .config import ModelConfig
from .networks import extract_features, init_params
from .pipeline import inclusion_loss, match_pair, similarity
from .transformer import multiplex_transform, tokenize


@dataclass
class TrainStats:
    losses: list[float] = field(default_factory=list)
    eval_steps: list[int] = field(default_factory=list)
    eval_accuracy: list[float] = field(default_factory=list)
    steps_run: int = 0
    seconds: float = 0.0
    stopped_early: bool = False


def _training_example(clip: list[PairedFrame], aug: AugmentConfig, rng):
    """Pick frames, augment, and return (ref_frame, tgt_frame) plus the
    per-target-segment gt mapping hooks."""
    interval = sample_interval(rng)
    interval = min(interval, len(clip) - 1)
    i = int(rng.integers(0, len(clip) - interval))
    pair = (clip[i], clip[i + interval])
    for _ in range(5):
        try:
            return geo_augment(pair, aug, rng)
        except DegenerateCrop:
            continue
    return pair  # fall back to the raw frames


def _gt_rows(ref_lab, mapping, tgt_frame):
    """Supervised target rows and their merged-region gt indices. Target
    segments whose region is absent from the reference are excluded."""
    assert ref_lab.source_ids is not None
    ref_index_of_gid = {gid: i for i, gid in enumerate(ref_lab.source_ids)}
    tgt_lab = tgt_frame.labeling
    rows, gt = [], []
    row = 0
    for rec in tgt_frame.segmap.records:
        if rec.kind != LineClass.BLANK:
            continue
        gid = tgt_lab.source_ids[tgt_lab.region_of[rec.id]]
        if gid in ref_index_of_gid:
            rows.append(row)
            gt.append(int(mapping[ref_index_of_gid[gid]]))
        row += 1
    return np.array(rows, dtype=np.int64), np.array(gt, dtype=np.int64)


def _forward_loss(ref_frame, tgt_frame, store, cfg, merge_p, rng):
    ref_lab = ref_frame.labeling
    # cheb-3 reach: synthesized frames separate regions with 2-px bands
    adj = region_adjacency(adjacency(ref_frame.segmap, max_chebyshev=3), ref_lab)
    merged, mapping = merge_labels(ref_lab, adj, merge_p, rng)

    rows, gt = _gt_rows(ref_lab, mapping, tgt_frame)
    if len(rows) == 0:
        return None

    palette = recolor_regions(merged.n_regions, rng)
    seg_colors = palette.colors[merged.region_of]
    ref_recolored = fill_segments(ref_frame.segmap, seg_colors)

    flow = estimate_flow(
        ref_frame.lines, tgt_frame.lines, block=cfg.flow_block, radius=cfg.flow_radius
    )
    warped = warp_colors(ref_recolored, flow, background=(0, 0, 0))

    feats_ref = extract_features(ref_frame.lines, ref_recolored, store, cfg, "reference")
    feats_tgt = extract_features(tgt_frame.lines, warped, store, cfg, "target")
    ref_tokens = tokenize(feats_ref, ref_frame.segmap, merged, store, cfg)
    tgt_tokens = tokenize(feats_tgt, tgt_frame.segmap, None, store, cfg)
    x_ref, x_tgt = multiplex_transform(ref_tokens, tgt_tokens, store, cfg)
    S = similarity(x_ref, x_tgt)
    return inclusion_loss(S, gt, rows=rows)


def pair_segment_accuracy(
    clips: list[list[PairedFrame]], store: ParamStore, cfg: ModelConfig, seed: int = 0
) -> float:
    """Fraction of target blank segments assigned their gt color over all
    consecutive (gt-reference) pairs of the given clips."""
    rng = np.random.default_rng(seed)
    correct = total = 0
    for clip in clips:
        for t in range(1, len(clip)):
            ref, tgt = clip[t - 1], clip[t]
            result, _, _ = match_pair(
                ref.segmap,
                ref.labeling,
                ref.lines,
                tgt.lines,
                store,
                cfg,
                rng,
            )
            tgt_lab = tgt.labeling
            gt_colors = tgt_lab.color_of_region[tgt_lab.region_of]
            ref_colors = ref.labeling.color_of_region
            for sid, a in zip(result.segment_ids, result.assignments):
                total += 1
                if a >= 0 and (ref_colors[a] == gt_colors[sid]).all():
                    correct += 1
    return correct / max(total, 1)


def train_toy(
    clips: list[list[PairedFrame]],
    cfg: ModelConfig,
    augment: AugmentConfig,
    steps: int,
    seed: int,
    lr: float = 1e-4,
    merge_probability: float = 0.2,
    eval_clips: list[list[PairedFrame]] | None = None,
    eval_every: int = 0,
    target_accuracy: float | None = None,
    min_steps: int = 0,
    lr_decay_step: int | None = None,
    lr_decay: float = 0.25,
) -> tuple[ParamStore, TrainStats]:
    """Train the matcher on generated clips; returns the parameters and the
    loss/eval curves. With ``target_accuracy`` set, stops at the first
    scheduled evaluation past ``min_steps`` that clears it. The learning
    rate multiplies by ``lr_decay`` once at ``lr_decay_step`` (late
    oscillation otherwise undoes a converged model)."""
    rng = np.random.default_rng(seed)
    store = init_params(cfg, rng)
    stats = TrainStats()
    start = time.time()

    for step in range(steps):
        clip = clips[int(rng.integers(len(clips)))]
        ref_frame, tgt_frame = _training_example(clip, augment, rng)
        loss = _forward_loss(ref_frame, tgt_frame, store, cfg, merge_probability, rng)
        if loss is None:
            stats.losses.append(float("nan"))
            continue
        store.zero_grad()
        loss.backward()
        step_lr = lr
        if lr_decay_step is not None and step >= lr_decay_step:
            step_lr = lr * lr_decay
        adam_step(store, lr=step_lr)
        stats.losses.append(float(loss.data))
        stats.steps_run = step + 1

        if (
            eval_every
            and eval_clips
            and (step + 1) % eval_every == 0
        ):
            acc = pair_segment_accuracy(eval_clips, store, cfg, seed=seed)
            stats.eval_steps.append(step + 1)
            stats.eval_accuracy.append(acc)
            if (
                target_accuracy is not None
                and acc >= target_accuracy
                and step + 1 >= min_steps
            ):
                stats.stopped_early = True
                break

    stats.seconds = time.time() - start
    return store, stats
