"""The matching pipeline: similarity, loss, color propagation, and
clip-level chaining.

Matching runs on redistributed cube-center colors; assignments map back to
the reference palette's original RGB values through the region table, so
propagated colors are byte-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import ParamStore, Tensor, gather_rows
from ..errors import IndexOutOfRange, ShapeMismatch
from ..flowwarp import estimate_flow, recolor_regions, warp_colors
from ..raster import (
    LineArtRaster,
    LineClass,
    RegionLabeling,
    RgbRaster,
    SegmentMap,
    adjacency,
    extract_segments,
    fill_segments,
    merge_color_lines_structural,
    pack_rgb,
    unpack_rgb,
)
from .config import ModelConfig
from .networks import extract_features
from .transformer import TokenSet, multiplex_transform, tokenize


@dataclass(frozen=True)
class SimilarityMatrix:
    """Row-stochastic target-segment x reference-region probabilities.

    ``logits`` stay attached for the loss path (log-softmax of logits is
    stabler than log of probabilities)."""

    logits: Tensor  # [N_target, K_reference]
    probs: Tensor

    @property
    def n_target(self) -> int:
        return self.logits.data.shape[0]

    @property
    def n_reference(self) -> int:
        return self.logits.data.shape[1]


def similarity(x_ref: Tensor, x_tgt: Tensor) -> SimilarityMatrix:
    """Dot-product logits, softmax over the reference axis per target row."""
    if x_ref.data.shape[1] != x_tgt.data.shape[1]:
        raise ShapeMismatch("token widths differ")
    logits = x_tgt @ x_ref.t()
    return SimilarityMatrix(logits=logits, probs=logits.softmax(axis=-1))


def inclusion_loss(S: SimilarityMatrix, gt: np.ndarray, rows: np.ndarray | None = None) -> Tensor:
    """Mean cross-entropy of each (supervised) target row against its
    ground-truth region index."""
    gt = np.asarray(gt, dtype=np.int64)
    logits = S.logits
    if rows is not None:
        rows = np.asarray(rows, dtype=np.int64)
        logits = gather_rows(logits, rows)
    if len(gt) != logits.data.shape[0]:
        raise ShapeMismatch("one ground-truth index per supervised row")
    if len(gt) == 0:
        raise IndexOutOfRange("no supervised rows")
    if gt.min() < 0 or gt.max() >= S.n_reference:
        raise IndexOutOfRange(f"gt indices must be in [0, {S.n_reference})")
    lp = logits.log_softmax(axis=-1)
    picked = lp[np.arange(len(gt)), gt]
    return -picked.mean()


@dataclass(frozen=True)
class MatchResult:
    """Per-target-segment assignment (region index or -1 = unmatched),
    confidence (max row probability), and the colorized raster."""

    segment_ids: tuple[int, ...]
    assignments: np.ndarray
    confidence: np.ndarray
    raster: RgbRaster
    threshold: float

    @property
    def unmatched(self) -> list[int]:
        return [
            sid for sid, a in zip(self.segment_ids, self.assignments) if a < 0
        ]

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "segments": [
                {
                    "id": int(sid),
                    "region": int(a) if a >= 0 else None,
                    "confidence": float(c),
                    "unmatched": bool(a < 0),
                }
                for sid, a, c in zip(
                    self.segment_ids, self.assignments, self.confidence
                )
            ],
        }


def render_result(
    tgt_segmap: SegmentMap,
    row_ids: list[int] | tuple[int, ...],
    assignments: np.ndarray,
    ref_labeling: RegionLabeling,
    background: tuple[int, int, int],
) -> RgbRaster:
    """Fill matched segments with their region's original color; unmatched
    segments and everything outside the rows render as background."""
    colors = np.empty((tgt_segmap.n_segments, 3), dtype=np.uint8)
    colors[...] = background
    table = ref_labeling.color_of_region
    for sid, a in zip(row_ids, assignments):
        if a >= 0:
            colors[sid] = table[a]
    return fill_segments(tgt_segmap, colors)


def propagate_colors(
    S: SimilarityMatrix,
    ref_labeling: RegionLabeling,
    tgt_segmap: SegmentMap,
    threshold: float = 0.2,
    background: tuple[int, int, int] = (255, 255, 255),
) -> MatchResult:
    """Assign each target blank segment its argmax region when the max
    probability clears the threshold, and map the region back to the
    reference's original color."""
    if ref_labeling.color_of_region is None:
        raise ValueError("reference labeling must carry original colors")
    row_ids = [r.id for r in tgt_segmap.records if r.kind == LineClass.BLANK]
    if len(row_ids) != S.n_target:
        raise ShapeMismatch(
            f"{S.n_target} similarity rows vs {len(row_ids)} target segments"
        )
    probs = S.probs.data
    confidence = probs.max(axis=1)
    argmax = probs.argmax(axis=1).astype(np.int32)
    assignments = np.where(confidence >= threshold, argmax, -1).astype(np.int32)
    raster = render_result(tgt_segmap, row_ids, assignments, ref_labeling, background)
    return MatchResult(
        segment_ids=tuple(row_ids),
        assignments=assignments,
        confidence=confidence,
        raster=raster,
        threshold=threshold,
    )


def reference_regions_from_coloring(
    segmap: SegmentMap, colored: RgbRaster
) -> RegionLabeling:
    """Inference-time inventory: group same-color segments that touch
    across a line into one region (the line-art equivalent of per-color
    connected components on the flat image)."""
    seg_color = np.empty(segmap.n_segments, dtype=np.int64)
    keys = pack_rgb(colored.pixels)
    for r in segmap.records:
        vals, counts = np.unique(keys[segmap.ids == r.id], return_counts=True)
        seg_color[r.id] = vals[counts.argmax()]

    parent = list(range(segmap.n_segments))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for (a, b), _ in adjacency(segmap).items():
        if seg_color[a] == seg_color[b]:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    roots = [find(i) for i in range(segmap.n_segments)]
    order = sorted(set(roots))
    compact = {r: i for i, r in enumerate(order)}
    region_of = np.array([compact[r] for r in roots], dtype=np.int32)
    colors = np.array(
        [unpack_rgb(int(seg_color[r])) for r in order], dtype=np.uint8
    )
    return RegionLabeling(
        region_of=region_of, n_regions=len(order), color_of_region=colors
    )


def labeling_from_match(
    segmap: SegmentMap, result: MatchResult, ref_labeling: RegionLabeling
) -> RegionLabeling:
    """The next chain link's inventory: matched segments grouped by
    assigned color across adjacency, unmatched segments excluded (-1)."""
    table = ref_labeling.color_of_region
    seg_color = np.full(segmap.n_segments, -1, dtype=np.int64)
    for sid, a in zip(result.segment_ids, result.assignments):
        if a >= 0:
            c = table[a]
            seg_color[sid] = (int(c[0]) << 16) | (int(c[1]) << 8) | int(c[2])

    parent = list(range(segmap.n_segments))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for (a, b), _ in adjacency(segmap).items():
        if seg_color[a] >= 0 and seg_color[a] == seg_color[b]:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    roots = [find(i) if seg_color[i] >= 0 else -1 for i in range(segmap.n_segments)]
    order = sorted({r for r in roots if r >= 0})
    compact = {r: i for i, r in enumerate(order)}
    region_of = np.array(
        [compact[r] if r >= 0 else -1 for r in roots], dtype=np.int32
    )
    colors = np.array(
        [unpack_rgb(int(seg_color[r])) for r in order], dtype=np.uint8
    ).reshape(-1, 3)
    return RegionLabeling(
        region_of=region_of, n_regions=len(order), color_of_region=colors
    )


def match_pair(
    ref_segmap: SegmentMap,
    ref_labeling: RegionLabeling,
    ref_lines: LineArtRaster,
    tgt_lines: LineArtRaster,
    store: ParamStore,
    cfg: ModelConfig,
    rng,
    threshold: float | None = None,
    tgt_segmap: SegmentMap | None = None,
    semantics: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[MatchResult, SimilarityMatrix, SegmentMap]:
    """One reference→target inference pass (recolor, flow warp, features,
    tokens, transformer, thresholded assignment)."""
    palette = recolor_regions(ref_labeling.n_regions, rng)
    ref_recolored = recolor_frame_safe(ref_labeling, ref_segmap, palette)

    flow = estimate_flow(
        ref_lines, tgt_lines, block=cfg.flow_block, radius=cfg.flow_radius
    )
    warped = warp_colors(ref_recolored, flow, background=(0, 0, 0))

    if tgt_segmap is None:
        tgt_segmap = merge_color_lines_structural(extract_segments(tgt_lines))

    sem_ref = semantics[0] if semantics else None
    sem_tgt = semantics[1] if semantics else None
    feats_ref = extract_features(
        ref_lines, ref_recolored, store, cfg, "reference", semantic=sem_ref
    )
    feats_tgt = extract_features(
        tgt_lines, warped, store, cfg, "target", semantic=sem_tgt
    )

    ref_tokens = tokenize(feats_ref, ref_segmap, ref_labeling, store, cfg)
    tgt_tokens = tokenize(feats_tgt, tgt_segmap, None, store, cfg)
    x_ref, x_tgt = multiplex_transform(ref_tokens, tgt_tokens, store, cfg)
    S = similarity(x_ref, x_tgt)
    result = propagate_colors(
        S,
        ref_labeling,
        tgt_segmap,
        threshold=cfg.match_threshold if threshold is None else threshold,
    )
    return result, S, tgt_segmap


def recolor_frame_safe(
    labeling: RegionLabeling, segmap: SegmentMap, palette
) -> RgbRaster:
    """recolor_frame that renders excluded (-1) segments as line color."""
    colors = np.zeros((segmap.n_segments, 3), dtype=np.uint8)
    live = labeling.region_of >= 0
    colors[live] = palette.colors[labeling.region_of[live]]
    return fill_segments(segmap, colors)


def identity_result(segmap: SegmentMap, labeling: RegionLabeling, raster: RgbRaster) -> MatchResult:
    ids = [r.id for r in segmap.records if r.kind == LineClass.BLANK]
    assignments = labeling.region_of[ids].astype(np.int32)
    return MatchResult(
        segment_ids=tuple(ids),
        assignments=assignments,
        confidence=np.ones(len(ids)),
        raster=raster,
        threshold=0.0,
    )


def propagate_clip(
    frames: list[LineArtRaster],
    ref_colored: RgbRaster,
    store: ParamStore | None,
    cfg: ModelConfig,
    mode: str = "chain",
    threshold: float | None = None,
    backend: str = "neural",
    rng=None,
) -> tuple[list[RgbRaster], list[MatchResult]]:
    """Colorize a clip from its colorized first frame.

    mode="chain": frame t-1's output (unmatched segments excluded from the
    inventory) is the reference for frame t. mode="fixed": frame 0 is
    always the reference. backend "neural" needs ``store``; "hu" is the
    classical matcher.
    """
    from .hu import hu_match

    if mode not in ("chain", "fixed"):
        raise ValueError("mode must be 'chain' or 'fixed'")
    if backend not in ("neural", "hu"):
        raise ValueError("backend must be 'neural' or 'hu'")
    if backend == "neural" and store is None:
        raise ValueError("neural backend needs parameters")
    if rng is None:
        rng = np.random.default_rng(0)

    seg0 = merge_color_lines_structural(extract_segments(frames[0]))
    lab0 = reference_regions_from_coloring(seg0, ref_colored)

    outputs = [ref_colored]
    results = [identity_result(seg0, lab0, ref_colored)]
    ref_state = (seg0, lab0, frames[0])

    thr = cfg.match_threshold if threshold is None else threshold
    for t in range(1, len(frames)):
        ref_segmap, ref_labeling, ref_lines = ref_state
        tgt_segmap = merge_color_lines_structural(extract_segments(frames[t]))
        if backend == "hu":
            result = hu_match((ref_segmap, ref_labeling), tgt_segmap, threshold=thr)
        else:
            result, _, tgt_segmap = match_pair(
                ref_segmap,
                ref_labeling,
                ref_lines,
                frames[t],
                store,
                cfg,
                rng,
                threshold=thr,
                tgt_segmap=tgt_segmap,
            )
        outputs.append(result.raster)
        results.append(result)
        if mode == "chain":
            next_lab = labeling_from_match(tgt_segmap, result, ref_labeling)
            ref_state = (tgt_segmap, next_lab, frames[t])
    return outputs, results
