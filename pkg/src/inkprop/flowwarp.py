"""Coarse color propagation: RGB-cube recolorization, block-matching flow
estimation over line rasters, and backward color warping.

The warped reference coloring is only a seed: it leaks region-grouping
evidence into the matcher, which resolves the disocclusions and
misalignments the warp leaves behind.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, MalformedFlowFile
from .raster import LineArtRaster, RgbRaster, background_color

FLOW_MAGIC = b"IFLO"


@dataclass(frozen=True)
class FlowField:
    """Per-pixel backward displacement (dx, dy): out(x,y) = ref(x+dx, y+dy)."""

    vectors: np.ndarray  # [H, W, 2] float64

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vectors, dtype=np.float64))
        if v.ndim != 3 or v.shape[2] != 2:
            raise ValueError("vectors must be [H,W,2]")
        if not np.isfinite(v).all():
            raise ValueError("flow must be finite")
        object.__setattr__(self, "vectors", v)
        v.flags.writeable = False

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]


@dataclass(frozen=True)
class PaletteAssignment:
    """Region index → well-separated cube-center RGB, plus the cube side."""

    colors: np.ndarray  # [K, 3] uint8
    side: float

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.colors, dtype=np.uint8))
        object.__setattr__(self, "colors", c)
        c.flags.writeable = False

    @property
    def K(self) -> int:
        return self.colors.shape[0]


def recolor_regions(K: int, rng) -> PaletteAssignment:
    """Partition RGB space into an n³ grid (n = ⌈K^(1/3)⌉, side 255/n, the
    paper's 255·K^(-1/3) padded to the containing perfect cube) and assign
    the first K cube centers, in lexicographic order, to regions by a
    random permutation."""
    if K < 1:
        raise ValueError("K must be >= 1")
    n = int(np.ceil(np.cbrt(K)))
    while n**3 < K:  # guard against cbrt rounding down at perfect cubes
        n += 1
    if n > 128:
        raise ValueError("K too large for distinct 8-bit cube centers")
    side = 255.0 / n
    idx = np.arange(K)
    coords = np.stack([idx // (n * n), (idx // n) % n, idx % n], axis=1)
    centers = np.floor((coords + 0.5) * side + 0.5).astype(np.uint8)
    perm = rng.permutation(K)
    colors = centers[perm]
    return PaletteAssignment(colors=colors, side=side)


def recolor_frame(
    labeling_region_of: np.ndarray,
    segmap_ids: np.ndarray,
    palette: PaletteAssignment,
    line_color=(0, 0, 0),
) -> RgbRaster:
    """Render a frame with every segment filled by its region's cube color."""
    seg_colors = palette.colors[labeling_region_of]
    lut = np.concatenate(
        [seg_colors, np.array([line_color], dtype=np.uint8)], axis=0
    )
    idx = np.where(segmap_ids >= 0, segmap_ids, len(seg_colors))
    return RgbRaster(pixels=lut[idx])


# ---------------------------------------------------------------------------
# Flow estimation
# ---------------------------------------------------------------------------

def _displacement_order(radius: int) -> np.ndarray:
    """(dy, dx) candidates sorted by norm then lexicographic: argmin over
    this order breaks ties toward zero."""
    ds = np.array(
        [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    )
    order = np.lexsort((ds[:, 1], ds[:, 0], (ds**2).sum(axis=1)))
    return ds[order]


def block_match_grid(
    ref_lines: LineArtRaster,
    tgt_lines: LineArtRaster,
    block: int = 16,
    radius: int = 24,
    min_pixels: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Integer displacement per target block minimizing line-pixel mismatch.

    Returns (grid [gh, gw, 2] of (dx, dy), centers [gh, gw, 2] of block
    centers in pixel coords). Blocks with fewer than ``min_pixels`` line
    pixels get zero flow (no evidence)."""
    if ref_lines.classes.shape != tgt_lines.classes.shape:
        raise DimensionMismatch("flow inputs must share dimensions")
    ref = (ref_lines.classes != 0).astype(np.float64)
    tgt = (tgt_lines.classes != 0).astype(np.float64)
    h, w = ref.shape
    gh, gw = -(-h // block), -(-w // block)
    pad_h, pad_w = gh * block, gw * block
    tgt_p = np.zeros((pad_h, pad_w))
    tgt_p[:h, :w] = tgt
    ref_p = np.zeros((pad_h + 2 * radius, pad_w + 2 * radius))
    ref_p[radius : radius + h, radius : radius + w] = ref

    cand = _displacement_order(radius)
    grid = np.zeros((gh, gw, 2))
    centers = np.zeros((gh, gw, 2))
    for bi in range(gh):
        for bj in range(gw):
            y0, x0 = bi * block, bj * block
            centers[bi, bj] = (x0 + block / 2.0, y0 + block / 2.0)
            tb = tgt_p[y0 : y0 + block, x0 : x0 + block]
            if tb.sum() < min_pixels:
                continue
            neigh = ref_p[y0 : y0 + block + 2 * radius, x0 : x0 + block + 2 * radius]
            windows = np.lib.stride_tricks.sliding_window_view(neigh, (block, block))
            costs = np.abs(windows[cand[:, 0] + radius, cand[:, 1] + radius] - tb).sum(
                axis=(1, 2)
            )
            best = int(costs.argmin())  # first minimum = smallest-norm tie
            grid[bi, bj] = (cand[best, 1], cand[best, 0])
    return grid, centers


def _bilinear_grid_upsample(
    grid: np.ndarray, centers: np.ndarray, h: int, w: int, block: int
) -> np.ndarray:
    """Interpolate the block-center lattice to per-pixel flow, clamping to
    the lattice hull at the borders."""
    gh, gw = grid.shape[:2]
    ys = (np.arange(h) + 0.5 - block / 2.0) / block
    xs = (np.arange(w) + 0.5 - block / 2.0) / block
    ys = np.clip(ys, 0, gh - 1)
    xs = np.clip(xs, 0, gw - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    out = (
        grid[y0][:, x0] * (1 - wy) * (1 - wx)
        + grid[y0][:, x1] * (1 - wy) * wx
        + grid[y1][:, x0] * wy * (1 - wx)
        + grid[y1][:, x1] * wy * wx
    )
    return out


def estimate_flow(
    ref_lines: LineArtRaster,
    tgt_lines: LineArtRaster,
    method: str = "blockmatch",
    block: int = 16,
    radius: int = 24,
    path: str | Path | None = None,
) -> FlowField:
    """Backward flow target → reference.

    method="blockmatch": integer block displacements on the binarized line
    rasters, bilinearly upsampled per pixel. method="file": an externally
    computed field in the IFLO format, validated against the target size.
    """
    if method == "file":
        if path is None:
            raise ValueError("method='file' needs a path")
        flow = load_flow(path)
        if (flow.height, flow.width) != tgt_lines.classes.shape:
            raise DimensionMismatch("external flow does not match frame size")
        return flow
    if method != "blockmatch":
        raise ValueError(f"unknown flow method {method!r}")
    h, w = tgt_lines.classes.shape
    grid, centers = block_match_grid(ref_lines, tgt_lines, block, radius)
    return FlowField(vectors=_bilinear_grid_upsample(grid, centers, h, w, block))


def warp_colors(
    ref_colors: RgbRaster,
    flow: FlowField,
    background: tuple[int, int, int] | None = None,
) -> RgbRaster:
    """Backward warp by nearest-neighbor sampling (flat colors must never
    blend). Out-of-bounds samples take the background color."""
    h, w = ref_colors.height, ref_colors.width
    if (flow.height, flow.width) != (h, w):
        raise DimensionMismatch("flow does not match reference dimensions")
    if background is None:
        background = background_color(ref_colors) or (255, 255, 255)
    yy, xx = np.mgrid[0:h, 0:w]
    sx = np.floor(xx + flow.vectors[..., 0] + 0.5).astype(np.int64)
    sy = np.floor(yy + flow.vectors[..., 1] + 0.5).astype(np.int64)
    valid = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    out = np.empty((h, w, 3), dtype=np.uint8)
    out[...] = np.array(background, dtype=np.uint8)
    out[valid] = ref_colors.pixels[sy[valid], sx[valid]]
    if ref_colors.alpha is not None:
        alpha = np.zeros((h, w), dtype=np.uint8)
        alpha[valid] = ref_colors.alpha[sy[valid], sx[valid]]
        return RgbRaster(pixels=out, alpha=alpha)
    return RgbRaster(pixels=out)


# ---------------------------------------------------------------------------
# IFLO file format: magic, u32 width, u32 height, then width*height
# little-endian (f32 dx, f32 dy) pairs in row-major order.
# ---------------------------------------------------------------------------

def save_flow(flow: FlowField, path: str | Path) -> None:
    h, w = flow.height, flow.width
    payload = flow.vectors.astype("<f4").tobytes()
    Path(path).write_bytes(FLOW_MAGIC + struct.pack("<II", w, h) + payload)


def load_flow(path: str | Path) -> FlowField:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != FLOW_MAGIC:
        raise MalformedFlowFile(f"{path}: bad magic")
    w, h = struct.unpack("<II", data[4:12])
    expected = 12 + w * h * 8
    if len(data) != expected:
        raise MalformedFlowFile(
            f"{path}: expected {expected} bytes for {w}x{h}, got {len(data)}"
        )
    vec = np.frombuffer(data[12:], dtype="<f4").reshape(h, w, 2).astype(np.float64)
    if not np.isfinite(vec).all():
        raise MalformedFlowFile(f"{path}: non-finite flow values")
    return FlowField(vectors=vec)
