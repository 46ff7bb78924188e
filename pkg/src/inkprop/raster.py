"""Raster core: line-art quantization, segment extraction, adjacency.

The geometry source for the whole pipeline. Frames arrive as RGB(A)
rasters, get quantized to the four-color scan palette (black/red/blue/
green lines on transparent background), and are split into line-enclosed
segments: 4-connected components of non-line pixels, the atomic unit a
paint bucket fills.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy import ndimage

from .errors import AllLinePixels

# 4-connected structuring element for component labeling.
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

SENTINEL = -1  # segment id reserved for Black line pixels


class LineClass(IntEnum):
    BLANK = 0
    BLACK = 1
    RED = 2
    BLUE = 3
    GREEN = 4


# Scan palette, in tie-break priority order.
LINE_PALETTE = {
    LineClass.BLACK: (0, 0, 0),
    LineClass.RED: (255, 0, 0),
    LineClass.BLUE: (0, 0, 255),
    LineClass.GREEN: (0, 255, 0),
}


@dataclass(frozen=True)
class RgbRaster:
    """8-bit RGB frame with an optional alpha plane, shape [H, W, 3] / [H, W]."""

    pixels: np.ndarray
    alpha: np.ndarray | None = None

    def __post_init__(self):
        px = np.ascontiguousarray(np.asarray(self.pixels, dtype=np.uint8))
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"expected [H,W,3] pixels, got {px.shape}")
        object.__setattr__(self, "pixels", px)
        if self.alpha is not None:
            a = np.ascontiguousarray(np.asarray(self.alpha, dtype=np.uint8))
            if a.shape != px.shape[:2]:
                raise ValueError("alpha plane does not match pixel dimensions")
            object.__setattr__(self, "alpha", a)
        self.pixels.flags.writeable = False
        if self.alpha is not None:
            self.alpha.flags.writeable = False

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class LineArtRaster:
    """Per-pixel line classes, shape [H, W], values from LineClass."""

    classes: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.classes, dtype=np.uint8))
        if c.ndim != 2 or c.min(initial=0) < 0 or c.max(initial=0) > 4:
            raise ValueError("classes must be a [H,W] array of LineClass values")
        object.__setattr__(self, "classes", c)
        self.classes.flags.writeable = False

    @property
    def height(self) -> int:
        return self.classes.shape[0]

    @property
    def width(self) -> int:
        return self.classes.shape[1]

    def line_mask(self) -> np.ndarray:
        """True wherever any line (black or color) is drawn."""
        return self.classes != LineClass.BLANK


@dataclass(frozen=True)
class SegmentRecord:
    id: int
    area: int
    bbox: tuple[int, int, int, int]  # (min_x, min_y, max_x, max_y), inclusive
    kind: LineClass  # BLANK, or RED/BLUE/GREEN for color-line segments


@dataclass(frozen=True)
class SegmentMap:
    """Per-pixel segment ids (SENTINEL on Black line pixels) plus records."""

    ids: np.ndarray
    records: tuple[SegmentRecord, ...]

    def __post_init__(self):
        ids = np.ascontiguousarray(np.asarray(self.ids, dtype=np.int32))
        if ids.ndim != 2:
            raise ValueError("ids must be [H,W]")
        object.__setattr__(self, "ids", ids)
        self.ids.flags.writeable = False

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]

    @property
    def n_segments(self) -> int:
        return len(self.records)

    def areas(self) -> np.ndarray:
        return np.array([r.area for r in self.records], dtype=np.int64)

    def mask_of(self, seg_id: int) -> np.ndarray:
        return self.ids == seg_id


@dataclass(frozen=True)
class RegionLabeling:
    """Maps segment ids to region indices (the inclusion-matching unit).

    ``color_of_region`` is present for ground-truth/reference frames.
    ``source_ids`` carries stable clip-global region identities for
    generated data (regions keep their id across frames of a clip even
    when occlusion splits them); None for frames without that lineage.
    A region index of -1 marks a segment excluded from the inventory
    (an unmatched segment dropped while chaining propagation).
    """

    region_of: np.ndarray  # [n_segments] int32 region index, -1 = excluded
    n_regions: int
    color_of_region: np.ndarray | None = None  # [K, 3] uint8
    source_ids: tuple[int, ...] | None = None
    background_region: int | None = None

    def __post_init__(self):
        r = np.ascontiguousarray(np.asarray(self.region_of, dtype=np.int32))
        object.__setattr__(self, "region_of", r)
        r.flags.writeable = False
        if self.color_of_region is not None:
            c = np.ascontiguousarray(np.asarray(self.color_of_region, dtype=np.uint8))
            if c.shape != (self.n_regions, 3):
                raise ValueError("color_of_region must be [K,3]")
            object.__setattr__(self, "color_of_region", c)
            c.flags.writeable = False
        if len(r) and self.n_regions > 0:
            if r.min() < -1 or r.max() >= self.n_regions:
                raise ValueError("region indices out of range")

    @property
    def K(self) -> int:
        return self.n_regions


def quantize_lines(frame: RgbRaster, tolerance: int = 32) -> LineArtRaster:
    """Class each pixel to the nearest palette color within an L∞ tolerance.

    Pixels outside every tolerance ball, and fully transparent pixels,
    are Blank. Ties go to palette order (black, red, blue, green).
    """
    if not 0 <= tolerance < 128:
        raise ValueError("tolerance must be in [0, 128)")
    px = frame.pixels.astype(np.int16)
    h, w = px.shape[:2]
    dists = np.empty((4, h, w), dtype=np.int16)
    for i, color in enumerate(LINE_PALETTE.values()):
        dists[i] = np.abs(px - np.array(color, dtype=np.int16)).max(axis=2)
    best = dists.argmin(axis=0)  # argmin takes the first minimum: palette order
    best_dist = np.take_along_axis(dists, best[None], axis=0)[0]
    classes = np.where(best_dist <= tolerance, best + 1, 0).astype(np.uint8)
    if frame.alpha is not None:
        classes[frame.alpha == 0] = LineClass.BLANK
    return LineArtRaster(classes)


def _label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    labeled, n = ndimage.label(mask, structure=_CROSS)
    return labeled, n


def _first_pixel_order(ids: np.ndarray, n: int) -> np.ndarray:
    """Rank segment ids by the raster-scan position of their first pixel."""
    flat = ids.ravel()
    firsts = np.full(n, flat.size, dtype=np.int64)
    pos = np.flatnonzero(flat >= 0)
    np.minimum.at(firsts, flat[pos], pos)
    return np.argsort(firsts, kind="stable")


def _finish_segment_map(raw_ids: np.ndarray, kinds: list[LineClass]) -> SegmentMap:
    """Compact raw ids into raster-scan order and build the records."""
    n = len(kinds)
    order = _first_pixel_order(raw_ids, n)
    remap = np.empty(n, dtype=np.int32)
    remap[order] = np.arange(n, dtype=np.int32)
    ids = np.where(raw_ids >= 0, remap[np.clip(raw_ids, 0, None)], SENTINEL).astype(np.int32)

    areas = np.bincount(ids.ravel()[ids.ravel() >= 0], minlength=n)
    objects = ndimage.find_objects(ids + 1, max_label=n)
    records = []
    for i in range(n):
        sy, sx = objects[i]
        records.append(
            SegmentRecord(
                id=i,
                area=int(areas[i]),
                bbox=(sx.start, sy.start, sx.stop - 1, sy.stop - 1),
                kind=kinds[order[i]],
            )
        )
    return SegmentMap(ids=ids, records=tuple(records))


def extract_segments(lines: LineArtRaster) -> SegmentMap:
    """Partition non-Black pixels into 4-connected segments.

    Blank pixels and each color-line class are labeled separately; Black
    pixels become the sentinel. Raises AllLinePixels for a frame with no
    fillable pixel.
    """
    classes = lines.classes
    if not (classes != LineClass.BLACK).any():
        raise AllLinePixels("frame contains only Black line pixels")
    raw = np.full(classes.shape, SENTINEL, dtype=np.int32)
    kinds: list[LineClass] = []
    for cls in (LineClass.BLANK, LineClass.RED, LineClass.BLUE, LineClass.GREEN):
        mask = classes == cls
        if not mask.any():
            continue
        labeled, n = _label_components(mask)
        raw[mask] = labeled[mask] - 1 + len(kinds)
        kinds.extend([cls] * n)
    return _finish_segment_map(raw, kinds)


def pack_rgb(pixels: np.ndarray) -> np.ndarray:
    """[...,3] uint8 → int32 key; convenient for per-color grouping."""
    p = pixels.astype(np.int32)
    return (p[..., 0] << 16) | (p[..., 1] << 8) | p[..., 2]


def unpack_rgb(key: int) -> tuple[int, int, int]:
    return ((key >> 16) & 255, (key >> 8) & 255, key & 255)


def background_mask(frame: RgbRaster) -> np.ndarray:
    """Background pixels: alpha=0 where an alpha plane exists, else the
    majority color of the raster border."""
    if frame.alpha is not None and (frame.alpha == 0).any():
        return frame.alpha == 0
    keys = pack_rgb(frame.pixels)
    border = np.concatenate([keys[0], keys[-1], keys[1:-1, 0], keys[1:-1, -1]])
    values, counts = np.unique(border, return_counts=True)
    return keys == values[counts.argmax()]


def background_color(frame: RgbRaster) -> tuple[int, int, int] | None:
    """The detected background RGB, or None when alpha-0 defines it."""
    if frame.alpha is not None and (frame.alpha == 0).any():
        return None
    keys = pack_rgb(frame.pixels)
    border = np.concatenate([keys[0], keys[-1], keys[1:-1, 0], keys[1:-1, -1]])
    values, counts = np.unique(border, return_counts=True)
    return unpack_rgb(int(values[counts.argmax()]))


def segments_from_colored(
    colored: RgbRaster, background: tuple[int, int, int] | None = None
) -> tuple[SegmentMap, RegionLabeling]:
    """Segment a flat-colored frame: one segment per 4-connected same-color
    component, one region per component, all background components pooled
    into a single distinguished background region."""
    keys = pack_rgb(colored.pixels)
    if background is not None:
        bg = keys == ((background[0] << 16) | (background[1] << 8) | background[2])
    else:
        bg = background_mask(colored)

    raw = np.full(keys.shape, SENTINEL, dtype=np.int32)
    seg_colors: list[int] = []
    seg_is_bg: list[bool] = []
    masked_keys = np.where(bg, -1, keys)
    for key in np.unique(masked_keys):
        mask = masked_keys == key
        labeled, n = _label_components(mask)
        raw[mask] = labeled[mask] - 1 + len(seg_colors)
        if key == -1:
            # use the raster's stored color for background segments
            first = np.argwhere(mask)[0]
            key = int(keys[first[0], first[1]])
            seg_is_bg.extend([True] * n)
        else:
            seg_is_bg.extend([False] * n)
        seg_colors.extend([int(key)] * n)

    segmap = _finish_segment_map(raw, [LineClass.BLANK] * len(seg_colors))
    # _finish_segment_map reordered the ids; recover the permutation
    order = _first_pixel_order(raw, len(seg_colors))

    region_of = np.empty(len(seg_colors), dtype=np.int32)
    colors: list[int] = []
    bg_region = None
    for new_id, old_id in enumerate(order):
        if seg_is_bg[old_id]:
            if bg_region is None:
                bg_region = len(colors)
                colors.append(seg_colors[old_id])
            region_of[new_id] = bg_region
        else:
            region_of[new_id] = len(colors)
            colors.append(seg_colors[old_id])

    table = np.array([unpack_rgb(c) for c in colors], dtype=np.uint8).reshape(-1, 3)
    labeling = RegionLabeling(
        region_of=region_of,
        n_regions=len(colors),
        color_of_region=table,
        background_region=bg_region,
    )
    return segmap, labeling


def _adj_offsets(max_cheb: int) -> list[tuple[int, int]]:
    """Chebyshev-ball offsets in the lexicographically positive half-plane,
    so each unordered pixel pair is visited exactly once."""
    return [
        (dy, dx)
        for dy in range(0, max_cheb + 1)
        for dx in range(-max_cheb, max_cheb + 1)
        if dy > 0 or dx > 0
    ]


def _shifted_pair(ids: np.ndarray, dy: int, dx: int) -> tuple[np.ndarray, np.ndarray]:
    """Views a[p] and b[p] such that b sits at offset (dy, dx) from a."""
    h, w = ids.shape
    ay0, ay1 = 0, h - dy
    by0, by1 = dy, h
    if dx >= 0:
        ax0, ax1, bx0, bx1 = 0, w - dx, dx, w
    else:
        ax0, ax1, bx0, bx1 = -dx, w, 0, w + dx
    return ids[ay0:ay1, ax0:ax1], ids[by0:by1, bx0:bx1]


def adjacency(seg: SegmentMap, max_chebyshev: int = 2) -> dict[tuple[int, int], int]:
    """Shared-border counts between segments.

    Two segments touch when some pixel pair, one from each, sits within
    Chebyshev distance ``max_chebyshev``; the count is the number of such
    pairs. The default 2 reaches across a 1-px line; erosion-synthesized
    frames draw 2-px boundary bands and need 3. Keys are (lo, hi) pairs.
    """
    ids = seg.ids
    n = seg.n_segments
    keys_acc: list[np.ndarray] = []
    for dy, dx in _adj_offsets(max_chebyshev):
        a, b = _shifted_pair(ids, dy, dx)
        valid = (a >= 0) & (b >= 0) & (a != b)
        if not valid.any():
            continue
        lo = np.minimum(a[valid], b[valid]).astype(np.int64)
        hi = np.maximum(a[valid], b[valid]).astype(np.int64)
        keys_acc.append(lo * n + hi)
    if not keys_acc:
        return {}
    uniq, cnt = np.unique(np.concatenate(keys_acc), return_counts=True)
    return {(int(k // n), int(k % n)): int(c) for k, c in zip(uniq, cnt)}


def direct_adjacency(seg: SegmentMap) -> dict[tuple[int, int], int]:
    """4-adjacent shared-border counts (no line in between); used for
    color-line merging where the strip touches its segment directly."""
    ids = seg.ids
    n = seg.n_segments
    keys_acc = []
    for a, b in (
        (ids[:-1, :], ids[1:, :]),
        (ids[:, :-1], ids[:, 1:]),
    ):
        valid = (a >= 0) & (b >= 0) & (a != b)
        if valid.any():
            lo = np.minimum(a[valid], b[valid]).astype(np.int64)
            hi = np.maximum(a[valid], b[valid]).astype(np.int64)
            keys_acc.append(lo * n + hi)
    if not keys_acc:
        return {}
    uniq, cnt = np.unique(np.concatenate(keys_acc), return_counts=True)
    return {(int(k // n), int(k % n)): int(c) for k, c in zip(uniq, cnt)}


def region_adjacency(
    adj: dict[tuple[int, int], int], labeling: RegionLabeling
) -> dict[tuple[int, int], int]:
    """Lift a segment adjacency relation to region indices."""
    out: dict[tuple[int, int], int] = {}
    region_of = labeling.region_of
    for (a, b), c in adj.items():
        ra, rb = int(region_of[a]), int(region_of[b])
        if ra == rb:
            continue
        key = (min(ra, rb), max(ra, rb))
        out[key] = out.get(key, 0) + c
    return out


def merge_color_line_segments(
    seg: SegmentMap, gt_colors: RegionLabeling
) -> tuple[SegmentMap, RegionLabeling, list[int]]:
    """Merge every color-line segment into the adjacent blank segment whose
    ground-truth color matches its own.

    Ties break by largest shared border, then lowest segment id. Color
    lines with no blank neighbor are kept as their own (blank-kinded)
    segments and reported in the returned orphan list.
    """
    line_ids = [r.id for r in seg.records if r.kind != LineClass.BLANK]
    if not line_ids:
        return seg, gt_colors, []
    if gt_colors.color_of_region is None:
        raise ValueError("gt_colors must carry region colors")

    borders = direct_adjacency(seg)
    neighbor_of: dict[int, dict[int, int]] = {}
    for (a, b), c in borders.items():
        neighbor_of.setdefault(a, {})[b] = c
        neighbor_of.setdefault(b, {})[a] = c

    colors = gt_colors.color_of_region
    target = np.arange(seg.n_segments, dtype=np.int32)
    orphans: list[int] = []
    for cid in line_ids:
        own_color = colors[gt_colors.region_of[cid]]
        blanks = [
            (nid, cnt)
            for nid, cnt in neighbor_of.get(cid, {}).items()
            if seg.records[nid].kind == LineClass.BLANK
        ]
        if not blanks:
            orphans.append(cid)
            continue
        matching = [
            (nid, cnt)
            for nid, cnt in blanks
            if np.array_equal(colors[gt_colors.region_of[nid]], own_color)
        ]
        pool = matching or blanks
        pool.sort(key=lambda t: (-t[1], t[0]))
        target[cid] = pool[0][0]

    # one remap hop suffices: a color line can only target a blank segment
    new_raw = np.where(seg.ids >= 0, target[seg.ids.clip(0)], SENTINEL).astype(np.int32)

    survivors = sorted(set(int(t) for t in target))
    lut = np.full(seg.n_segments, SENTINEL, dtype=np.int32)
    for i, old in enumerate(survivors):
        lut[old] = i
    raw = np.where(new_raw >= 0, lut[new_raw.clip(0)], SENTINEL).astype(np.int32)

    kinds = [
        LineClass.BLANK if i in orphans else seg.records[i].kind for i in survivors
    ]
    merged_map = _finish_segment_map(raw, kinds)
    order = _first_pixel_order(raw, len(survivors))

    region_of = np.empty(len(survivors), dtype=np.int32)
    for new_id, slot in enumerate(order):
        region_of[new_id] = gt_colors.region_of[survivors[slot]]
    used = np.unique(region_of)
    region_remap = {int(r): i for i, r in enumerate(used)}
    region_of = np.array([region_remap[int(r)] for r in region_of], dtype=np.int32)
    table = colors[used]
    bg = gt_colors.background_region
    labeling = RegionLabeling(
        region_of=region_of,
        n_regions=len(used),
        color_of_region=table,
        background_region=region_remap.get(bg) if bg is not None else None,
    )
    return merged_map, labeling, orphans


def merge_color_lines_structural(seg: SegmentMap) -> SegmentMap:
    """Inference-time variant: merge color lines into the blank neighbor
    with the largest shared border (no ground truth available)."""
    line_ids = [r.id for r in seg.records if r.kind != LineClass.BLANK]
    if not line_ids:
        return seg
    borders = direct_adjacency(seg)
    neighbor_of: dict[int, dict[int, int]] = {}
    for (a, b), c in borders.items():
        neighbor_of.setdefault(a, {})[b] = c
        neighbor_of.setdefault(b, {})[a] = c

    target = np.arange(seg.n_segments, dtype=np.int32)
    for cid in line_ids:
        blanks = [
            (nid, cnt)
            for nid, cnt in neighbor_of.get(cid, {}).items()
            if seg.records[nid].kind == LineClass.BLANK
        ]
        if blanks:
            blanks.sort(key=lambda t: (-t[1], t[0]))
            target[cid] = blanks[0][0]

    new_raw = np.where(seg.ids >= 0, target[seg.ids.clip(0)], SENTINEL).astype(np.int32)
    survivors = sorted(set(int(t) for t in target))
    lut = np.full(seg.n_segments, SENTINEL, dtype=np.int32)
    for i, old in enumerate(survivors):
        lut[old] = i
    raw = np.where(new_raw >= 0, lut[new_raw.clip(0)], SENTINEL).astype(np.int32)
    return _finish_segment_map(raw, [LineClass.BLANK] * len(survivors))


def render_lines(lines: LineArtRaster) -> RgbRaster:
    """Render the class raster back to RGB (blank = transparent white)."""
    h, w = lines.classes.shape
    out = np.full((h, w, 3), 255, dtype=np.uint8)
    alpha = np.where(lines.classes == LineClass.BLANK, 0, 255).astype(np.uint8)
    for cls, color in LINE_PALETTE.items():
        out[lines.classes == cls] = color
    return RgbRaster(pixels=out, alpha=alpha)


def fill_segments(
    seg: SegmentMap,
    colors: np.ndarray,
    line_color: tuple[int, int, int] = (0, 0, 0),
) -> RgbRaster:
    """Paint each segment with its assigned color; sentinel pixels get
    ``line_color``. ``colors`` is [n_segments, 3] uint8."""
    colors = np.asarray(colors, dtype=np.uint8)
    lut = np.concatenate([colors, np.array([line_color], dtype=np.uint8)], axis=0)
    idx = np.where(seg.ids >= 0, seg.ids, len(colors))
    return RgbRaster(pixels=lut[idx])
