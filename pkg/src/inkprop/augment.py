"""Training-time augmentation.

Adjacent-label merging supervises inclusion (a target segment must land in
the right merged region, not just the right segment), geometric pair
augmentation emulates animation motion, and min-pooling keeps 1-px lines
alive through downscaling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCrop
from .raster import LineArtRaster, LineClass, RegionLabeling
from .synthesis import PairedFrame, paired_frame_from_region_map

# min-pool priority = luminance of the palette color; lines beat blank,
# darker lines beat lighter ones
_PRIORITY = np.array([255, 0, 76, 29, 150], dtype=np.int16)  # indexed by LineClass
_CLASS_BY_PRIORITY = {int(p): i for i, p in enumerate(_PRIORITY)}


@dataclass(frozen=True)
class AugmentConfig:
    merge_probability: float = 0.2
    translation: tuple[float, float] = (-400.0, 400.0)
    rotation: tuple[float, float] = (-np.pi / 9, np.pi / 9)
    resize: tuple[float, float] = (1.0 / 3.0, 1.0 / 2.0)
    crop: int = 640
    intervals: tuple[int, ...] = (0, 1, 2)
    seed: int = 0
    line_radius: int = 1

    def __post_init__(self):
        if not 0.0 <= self.merge_probability <= 1.0:
            raise ValueError("merge_probability must be in [0,1]")
        if self.resize[0] > self.resize[1] or self.resize[0] <= 0:
            raise ValueError("resize range must be increasing and positive")

    @classmethod
    def from_json(cls, data: dict) -> "AugmentConfig":
        kwargs = dict(data)
        for key in ("translation", "rotation", "resize", "intervals"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def to_json(self) -> dict:
        return {
            "merge_probability": self.merge_probability,
            "translation": list(self.translation),
            "rotation": list(self.rotation),
            "resize": list(self.resize),
            "crop": self.crop,
            "intervals": list(self.intervals),
            "seed": self.seed,
            "line_radius": self.line_radius,
        }


def sample_interval(rng) -> int:
    """Uniform draw over the frame intervals {0, 1, 2}."""
    return int(rng.integers(0, 3))


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def merge_labels(
    labeling: RegionLabeling,
    region_adj: dict[tuple[int, int], int],
    p: float,
    rng,
) -> tuple[RegionLabeling, np.ndarray]:
    """Randomly union adjacent regions with probability p per pair.

    Pairs are visited once each in sorted (lo, hi) order; unions use
    union-find semantics, so a pair drawn after earlier merges unions the
    merged groups. Returns the coarsened labeling and the old-region ->
    new-region index map (every output region is a union of inputs).
    """
    uf = _UnionFind(labeling.n_regions)
    merged_any = False
    for a, b in sorted(region_adj.keys()):
        if rng.random() < p:
            uf.union(a, b)
            merged_any = True

    roots = [uf.find(i) for i in range(labeling.n_regions)]
    order = sorted(set(roots))
    compact = {r: i for i, r in enumerate(order)}
    mapping = np.array([compact[r] for r in roots], dtype=np.int32)

    if not merged_any:
        return labeling, mapping

    new_labeling = RegionLabeling(
        region_of=mapping[labeling.region_of],
        n_regions=len(order),
        color_of_region=None,
        source_ids=None,
        background_region=(
            int(mapping[labeling.background_region])
            if labeling.background_region is not None
            else None
        ),
    )
    return new_labeling, mapping


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def minpool_resize(lines: LineArtRaster, out_h: int, out_w: int) -> LineArtRaster:
    """Resize a line raster, each output pixel taking the highest-priority
    class (lowest luminance) over its preimage footprint, so a line pixel
    anywhere in the footprint beats Blank."""
    pri = _PRIORITY[lines.classes]
    h, w = pri.shape
    row_idx = (np.arange(out_h) * h) // out_h
    col_idx = (np.arange(out_w) * w) // out_w
    pooled = np.minimum.reduceat(pri, row_idx, axis=0)
    pooled = np.minimum.reduceat(pooled, col_idx, axis=1)
    lut = np.zeros(256, dtype=np.uint8)
    for p, c in _CLASS_BY_PRIORITY.items():
        lut[p] = c
    return LineArtRaster(lut[pooled])


def nn_resize_classes(classes: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Plain nearest-neighbor resize (center sampling); the comparator for
    the min-pooling line-preservation property."""
    h, w = classes.shape
    ys = np.minimum(((np.arange(out_h) + 0.5) * h / out_h).astype(int), h - 1)
    xs = np.minimum(((np.arange(out_w) + 0.5) * w / out_w).astype(int), w - 1)
    return classes[np.ix_(ys, xs)]


def _inverse_affine_coords(out_h, out_w, src_h, src_w, scale, theta, tx, ty):
    """Source coordinates for each output pixel of resize->rotate->translate
    (rotation about the resized canvas center)."""
    yy, xx = np.mgrid[0:out_h, 0:out_w]
    px = xx + 0.5 - tx
    py = yy + 0.5 - ty
    cy, cx = out_h / 2.0, out_w / 2.0  # out dims = resized dims
    cos, sin = np.cos(-theta), np.sin(-theta)
    rx = (px - cx) * cos - (py - cy) * sin + cx
    ry = (px - cx) * sin + (py - cy) * cos + cy
    return rx / scale, ry / scale


def transform_region_map(
    region_map: np.ndarray, scale, theta, tx, ty, fill: int
) -> np.ndarray:
    """Nearest-neighbor affine of a region-id plane. Output canvas is the
    resized size; samples falling outside the source take ``fill``."""
    h, w = region_map.shape
    out_h, out_w = max(1, round(h * scale)), max(1, round(w * scale))
    sx, sy = _inverse_affine_coords(out_h, out_w, h, w, scale, theta, tx, ty)
    ix = np.floor(sx).astype(np.int64)
    iy = np.floor(sy).astype(np.int64)
    valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = np.full((out_h, out_w), fill, dtype=region_map.dtype)
    out[valid] = region_map[iy[valid], ix[valid]]
    return out


def transform_lines_minpool(
    lines: LineArtRaster, scale, theta, tx, ty
) -> LineArtRaster:
    """Affine for imported line-only rasters: the preimage footprint of
    every output pixel is supersampled on a grid finer than one source
    pixel and min-pooled, so downscaling cannot erase a line."""
    h, w = lines.classes.shape
    out_h, out_w = max(1, round(h * scale)), max(1, round(w * scale))
    n = int(np.ceil(1.0 / scale)) + 1  # subsample count per axis
    pri = _PRIORITY[lines.classes].astype(np.int16)
    best = np.full((out_h, out_w), 255, dtype=np.int16)
    offsets = (np.arange(n) + 0.5) / n - 0.5  # within-pixel offsets
    for oy in offsets:
        for ox in offsets:
            sx, sy = _inverse_affine_coords(
                out_h, out_w, h, w, scale, theta, tx + ox, ty + oy
            )
            ix = np.clip(np.floor(sx).astype(np.int64), 0, w - 1)
            iy = np.clip(np.floor(sy).astype(np.int64), 0, h - 1)
            inside = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
            sample = np.where(inside, pri[iy, ix], 255)
            best = np.minimum(best, sample)
    lut = np.zeros(256, dtype=np.uint8)
    for p, c in _CLASS_BY_PRIORITY.items():
        lut[p] = c
    return LineArtRaster(lut[best])


# ---------------------------------------------------------------------------
# Paired-frame geometric augmentation
# ---------------------------------------------------------------------------

def _colors_by_gid(frame: PairedFrame) -> np.ndarray:
    lab = frame.labeling
    if lab.source_ids is None or lab.color_of_region is None:
        raise ValueError("geo_augment needs generated frames with region lineage")
    max_gid = max(max(lab.source_ids), int(frame.region_map.max()))
    colors = np.zeros((max_gid + 1, 3), dtype=np.uint8)
    for idx, gid in enumerate(lab.source_ids):
        colors[gid] = lab.color_of_region[idx]
    return colors


def _augment_one(frame: PairedFrame, cfg: AugmentConfig, rng) -> PairedFrame:
    scale = rng.uniform(*cfg.resize)
    theta = rng.uniform(*cfg.rotation)
    tx = rng.uniform(*cfg.translation)
    ty = rng.uniform(*cfg.translation)

    lab = frame.labeling
    bg_gid = (
        lab.source_ids[lab.background_region]
        if lab.background_region is not None and lab.source_ids is not None
        else 0
    )
    colors = _colors_by_gid(frame)

    region_map = transform_region_map(
        frame.region_map, scale, theta, tx, ty, fill=bg_gid
    )
    out_h, out_w = region_map.shape
    if cfg.crop > out_h or cfg.crop > out_w:
        raise DegenerateCrop(
            f"crop {cfg.crop} exceeds post-resize dims {out_h}x{out_w}"
        )
    rebuilt = paired_frame_from_region_map(
        region_map, colors, None, cfg.line_radius, False, bg_gid
    )
    cy = int(rng.integers(0, out_h - cfg.crop + 1))
    cx = int(rng.integers(0, out_w - cfg.crop + 1))

    crop_map = region_map[cy : cy + cfg.crop, cx : cx + cfg.crop]
    crop_lines = LineArtRaster(
        rebuilt.lines.classes[cy : cy + cfg.crop, cx : cx + cfg.crop]
    )
    if (crop_lines.classes == LineClass.BLACK).all():
        raise DegenerateCrop("crop contains no segments")
    return paired_frame_from_region_map(
        crop_map, colors, None, cfg.line_radius, False, bg_gid, lines=crop_lines
    )


def geo_augment(
    pair: tuple[PairedFrame, PairedFrame], cfg: AugmentConfig, rng
) -> tuple[PairedFrame, PairedFrame]:
    """Independent resize/rotate/translate draws for each frame of the pair,
    then an independent crop per frame.

    The region-id plane is resampled by nearest neighbor and the line art
    regenerated from it (bands are computed before cropping, so crop
    borders slice lines open exactly like cropping a drawn raster would).
    Color lines are regenerated as black; augmentation is a training-time
    device and training does not distinguish line classes.
    """
    return _augment_one(pair[0], cfg, rng), _augment_one(pair[1], cfg, rng)
