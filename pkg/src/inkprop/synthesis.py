"""Paired training data synthesis.

Builds flat-color frames with exact region ground truth, derives line art
by morphological erosion (the band between a component and its erosion
becomes the line), and renders procedural 2D clips whose rigid motions and
occlusions reproduce the failure modes the matcher must survive: region
splits, large motion, tiny segments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import EmptyFrame
from .raster import (
    LineArtRaster,
    LineClass,
    RegionLabeling,
    RgbRaster,
    SegmentMap,
    extract_segments,
    pack_rgb,
    _label_components,
)


def _erosion_band(mask: np.ndarray, radius: int) -> np.ndarray:
    """mask \\ erode(mask) with a (2r+1)² square element; the outside of the
    raster counts as background, so border-touching components band at the
    border too."""
    se = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return mask & ~ndimage.binary_erosion(mask, structure=se, border_value=0)


def lines_from_flat(flat: RgbRaster, erosion_radius: int = 1) -> LineArtRaster:
    """Black erosion-difference lines around every same-color component."""
    if erosion_radius < 1:
        raise ValueError("erosion_radius must be >= 1")
    keys = pack_rgb(flat.pixels)
    classes = np.zeros(keys.shape, dtype=np.uint8)
    for key in np.unique(keys):
        comp_mask = keys == key
        classes[_erosion_band(comp_mask, erosion_radius)] = LineClass.BLACK
    return LineArtRaster(classes)


def extract_color_lines(
    flat: RgbRaster,
    highlight_colors: set[tuple[int, int, int]],
    shadow_colors: set[tuple[int, int, int]],
    erosion_radius: int = 1,
) -> LineArtRaster:
    """Like lines_from_flat, but highlight components band Red and shadow
    components band Blue."""
    if highlight_colors & shadow_colors:
        raise ValueError("highlight and shadow color sets must be disjoint")
    hl = {(r << 16) | (g << 8) | b for r, g, b in highlight_colors}
    sh = {(r << 16) | (g << 8) | b for r, g, b in shadow_colors}
    keys = pack_rgb(flat.pixels)
    classes = np.zeros(keys.shape, dtype=np.uint8)
    for key in np.unique(keys):
        band = _erosion_band(keys == key, erosion_radius)
        if key in hl:
            classes[band] = LineClass.RED
        elif key in sh:
            classes[band] = LineClass.BLUE
        else:
            classes[band] = LineClass.BLACK
    return LineArtRaster(classes)


# ---------------------------------------------------------------------------
# Procedural clip generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """One colorable sub-region of a shape: a convex polygon (vertices
    [N,2], (x,y) order) or an ellipse (cx, cy, rx, ry)."""

    kind: str  # "polygon" | "ellipse"
    geometry: tuple
    color: tuple[int, int, int]
    role: str = "normal"  # "normal" | "highlight" | "shadow"


@dataclass(frozen=True)
class ShapeSpec:
    """A group of regions sharing one rigid motion track.

    motions[t] = (tx, ty, rot_rad, scale), applied about ``pivot``.
    Regions are drawn in order, so later regions sit on top (sub-details
    like eyes or stripes come after the base)."""

    regions: tuple[Region, ...]
    pivot: tuple[float, float]
    motions: tuple[tuple[float, float, float, float], ...]


@dataclass(frozen=True)
class ClipSpec:
    frame_count: int
    width: int
    height: int
    background: tuple[int, int, int]
    shapes: tuple[ShapeSpec, ...]
    seed: int
    line_radius: int = 1
    color_lines: bool = False

    def __post_init__(self):
        if self.frame_count < 2:
            raise ValueError("frame_count must be >= 2")
        for s in self.shapes:
            if not s.regions:
                raise ValueError("every shape needs at least one region")
            if len(s.motions) != self.frame_count:
                raise ValueError("motions must cover every frame")

    def region_count(self) -> int:
        return 1 + sum(len(s.regions) for s in self.shapes)

    def region_colors(self) -> np.ndarray:
        """Global region id → RGB (id 0 is the canvas background)."""
        colors = [self.background]
        for s in self.shapes:
            colors.extend(r.color for r in s.regions)
        return np.array(colors, dtype=np.uint8)

    def region_roles(self) -> list[str]:
        roles = ["normal"]
        for s in self.shapes:
            roles.extend(r.role for r in s.regions)
        return roles


@dataclass(frozen=True)
class PairedFrame:
    """Flat colors, derived line art, segments, and region ground truth for
    one synthetic frame. ``region_map`` holds the clip-global region id of
    every pixel (lines included), the exact pre-occlusion identity that
    real data gets from UV-space index labels."""

    flat: RgbRaster
    lines: LineArtRaster
    segmap: SegmentMap
    labeling: RegionLabeling
    region_map: np.ndarray

    def __post_init__(self):
        rm = np.ascontiguousarray(np.asarray(self.region_map, dtype=np.int32))
        object.__setattr__(self, "region_map", rm)
        rm.flags.writeable = False


def _transform_points(pts: np.ndarray, pivot, motion) -> np.ndarray:
    tx, ty, rot, scale = motion
    c = np.asarray(pivot, dtype=np.float64)
    rel = (pts - c) * scale
    cos, sin = np.cos(rot), np.sin(rot)
    rotm = np.array([[cos, -sin], [sin, cos]])
    return rel @ rotm.T + c + np.array([tx, ty])


def _rasterize_region(region: Region, pivot, motion, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    px = xx + 0.5
    py = yy + 0.5
    if region.kind == "polygon":
        verts = _transform_points(
            np.asarray(region.geometry, dtype=np.float64), pivot, motion
        )
        # normalize to CCW so the half-plane test is uniform
        area2 = np.sum(
            verts[:, 0] * np.roll(verts[:, 1], -1)
            - np.roll(verts[:, 0], -1) * verts[:, 1]
        )
        if area2 < 0:
            verts = verts[::-1]
        mask = np.ones((h, w), dtype=bool)
        for i in range(len(verts)):
            x1, y1 = verts[i]
            x2, y2 = verts[(i + 1) % len(verts)]
            cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
            mask &= cross >= 0
        return mask
    if region.kind == "ellipse":
        cx, cy, rx, ry = region.geometry
        tx, ty, rot, scale = motion
        center = _transform_points(np.array([[cx, cy]]), pivot, motion)[0]
        # test in the ellipse's local frame
        dx = px - center[0]
        dy = py - center[1]
        cos, sin = np.cos(-rot), np.sin(-rot)
        lx = (dx * cos - dy * sin) / scale
        ly = (dx * sin + dy * cos) / scale
        return (lx / rx) ** 2 + (ly / ry) ** 2 <= 1.0
    raise ValueError(f"unknown region kind {region.kind!r}")


def render_region_map(spec: ClipSpec, frame: int) -> np.ndarray:
    """Per-pixel global region ids for one frame; later shapes occlude
    earlier ones, later regions within a shape occlude earlier ones."""
    region_map = np.zeros((spec.height, spec.width), dtype=np.int32)
    gid = 1
    for shape in spec.shapes:
        motion = shape.motions[frame]
        for region in shape.regions:
            mask = _rasterize_region(region, shape.pivot, motion, spec.height, spec.width)
            region_map[mask] = gid
            gid += 1
    return region_map


def _lines_from_region_map(
    region_map: np.ndarray, roles: list[str], radius: int, color_lines: bool
) -> LineArtRaster:
    classes = np.zeros(region_map.shape, dtype=np.uint8)
    for gid in np.unique(region_map):
        band = _erosion_band(region_map == gid, radius)
        role = roles[gid]
        if color_lines and role == "highlight":
            classes[band] = LineClass.RED
        elif color_lines and role == "shadow":
            classes[band] = LineClass.BLUE
        else:
            classes[band] = LineClass.BLACK
    return LineArtRaster(classes)


def paired_frame_from_region_map(
    region_map: np.ndarray,
    colors: np.ndarray,
    roles: list[str] | None = None,
    radius: int = 1,
    color_lines: bool = False,
    background_gid: int = 0,
    lines: LineArtRaster | None = None,
) -> PairedFrame:
    """Assemble a PairedFrame from a region-id plane and a color table."""
    roles = roles or ["normal"] * len(colors)
    if lines is None:
        lines = _lines_from_region_map(region_map, roles, radius, color_lines)
    flat = RgbRaster(pixels=colors[region_map])
    segmap = extract_segments(lines)

    # first pixel of each segment carries its region id (bands cover all
    # inter-region boundaries, so segments never straddle regions)
    flat_ids = segmap.ids.ravel()
    pos = np.flatnonzero(flat_ids >= 0)
    firsts = np.full(segmap.n_segments, flat_ids.size, dtype=np.int64)
    np.minimum.at(firsts, flat_ids[pos], pos)
    seg_gid = region_map.ravel()[firsts]

    present = np.unique(seg_gid)
    compact = {int(g): i for i, g in enumerate(present)}
    region_of = np.array([compact[int(g)] for g in seg_gid], dtype=np.int32)
    labeling = RegionLabeling(
        region_of=region_of,
        n_regions=len(present),
        color_of_region=colors[present],
        source_ids=tuple(int(g) for g in present),
        background_region=compact.get(background_gid),
    )
    return PairedFrame(
        flat=flat, lines=lines, segmap=segmap, labeling=labeling, region_map=region_map
    )


def generate_clip(spec: ClipSpec) -> list[PairedFrame]:
    """Rasterize every frame of the clip. Deterministic given the spec."""
    colors = spec.region_colors()
    roles = spec.region_roles()
    frames = []
    for t in range(spec.frame_count):
        region_map = render_region_map(spec, t)
        if not (region_map != 0).any():
            raise EmptyFrame(f"frame {t} rasterized to background only")
        frames.append(
            paired_frame_from_region_map(
                region_map,
                colors,
                roles,
                spec.line_radius,
                spec.color_lines,
            )
        )
    return frames


def gt_colored(frame: PairedFrame) -> RgbRaster:
    """The painter's finished frame: every segment filled with its region
    color, black lines kept. This is the evaluation ground truth."""
    labeling = frame.labeling
    seg_colors = labeling.color_of_region[labeling.region_of]
    from .raster import fill_segments

    return fill_segments(frame.segmap, seg_colors)


# ---------------------------------------------------------------------------
# Toy dataset presets (used by tests, demos, and the CLI synth command)
# ---------------------------------------------------------------------------

_TOY_PALETTES = np.array(
    [
        (214, 83, 78),
        (66, 134, 244),
        (86, 188, 112),
        (240, 180, 60),
        (150, 86, 200),
        (52, 190, 190),
    ],
    dtype=np.uint8,
)


def _linear_motion(frame_count, vx, vy, rot_rate=0.0, scale=1.0):
    return tuple(
        (vx * t, vy * t, rot_rate * t, scale) for t in range(frame_count)
    )


def toy_translating_spec(
    seed: int, frame_count: int = 4, size: int = 64, n_colors: int = 2
) -> ClipSpec:
    """Translating-shapes clip: four shape groups in separate quadrants,
    each a base polygon/ellipse with 1-2 sub-regions, drifting slowly.
    Foreground colors come from an n_colors palette, so distinct regions
    share colors (the inclusion gt is the region id, not the color).

    Candidates whose rasterization pinches off slivers (corner jaggies can
    disconnect an eroded interior) are rejected and redrawn, so every
    returned clip has exactly one blank segment per visible region and
    8-15 segments per frame."""
    for attempt in range(64):
        spec = _translating_candidate(
            np.random.default_rng([seed, attempt]), seed, frame_count, size, n_colors
        )
        if _clip_is_clean(spec):
            return spec
    raise RuntimeError(f"no clean translating clip found for seed {seed}")


def _clip_is_clean(spec: ClipSpec) -> bool:
    for frame in generate_clip(spec):
        blanks = [r for r in frame.segmap.records if r.kind == LineClass.BLANK]
        if not 8 <= len(blanks) <= 15:
            return False
        if any(r.area < 6 for r in blanks):
            return False
        regions = frame.labeling.region_of[[r.id for r in blanks]]
        if len(set(regions.tolist())) != len(blanks):
            return False  # some region split into several blank segments
    return True


def _translating_candidate(
    rng, seed: int, frame_count: int, size: int, n_colors: int
) -> ClipSpec:
    palette = _TOY_PALETTES[
        rng.choice(len(_TOY_PALETTES), size=n_colors, replace=False)
    ]
    cell = size // 2
    shapes = []
    for ci, (cy, cx) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
        ox = cx * cell + cell / 2
        oy = cy * cell + cell / 2
        base_r = rng.uniform(8.5, 10.5)
        color = tuple(int(v) for v in palette[rng.integers(n_colors)])
        if rng.random() < 0.5:
            k = int(rng.integers(5, 7))
            ang = rng.uniform(0, 2 * np.pi) + np.arange(k) * 2 * np.pi / k
            verts = np.stack(
                [ox + base_r * np.cos(ang), oy + base_r * np.sin(ang)], axis=1
            )
            base = Region("polygon", tuple(map(tuple, verts)), color)
            inner_r = base_r * np.cos(np.pi / k)
        else:
            ry = rng.uniform(0.8, 1.0) * base_r
            base = Region("ellipse", (ox, oy, base_r, ry), color)
            inner_r = ry
        regions = [base]
        # sub-details sit strictly inside the base interior so neither the
        # base ring nor the subs fragment under banding
        n_subs = int(rng.integers(1, 3))
        sub_r = rng.uniform(2.8, 3.6)
        max_off = inner_r - sub_r - 2.5
        if n_subs == 2 and max_off < sub_r + 1.5:
            n_subs = 1
        theta0 = rng.uniform(0, 2 * np.pi)
        for i in range(n_subs):
            theta = theta0 + i * np.pi
            off = (
                rng.uniform(sub_r + 1.5, max_off)
                if n_subs == 2
                else rng.uniform(0, max(max_off, 0.0))
            )
            sub_color = tuple(int(v) for v in palette[rng.integers(n_colors)])
            regions.append(
                Region(
                    "ellipse",
                    (
                        ox + off * np.cos(theta),
                        oy + off * np.sin(theta),
                        sub_r,
                        sub_r,
                    ),
                    sub_color,
                )
            )
        vx, vy = rng.uniform(-1.0, 1.0, size=2)
        rot = rng.uniform(-0.04, 0.04)
        shapes.append(
            ShapeSpec(
                regions=tuple(regions),
                pivot=(ox, oy),
                motions=_linear_motion(frame_count, vx, vy, rot),
            )
        )
    return ClipSpec(
        frame_count=frame_count,
        width=size,
        height=size,
        background=(255, 255, 255),
        shapes=tuple(shapes),
        seed=seed,
    )


def toy_occlusion_spec(seed: int, frame_count: int = 4, size: int = 64) -> ClipSpec:
    """Occlusion clip: a static wide region that a two-bar occluder sweeps
    across, splitting it into >= 3 fragments in the later frames, plus thin
    static distractor strips shaped like the fragments (the classical
    segment matcher's trap)."""
    rng = np.random.default_rng(seed)
    colors = _TOY_PALETTES[rng.permutation(len(_TOY_PALETTES))]
    big_color = tuple(int(v) for v in colors[0])
    bar_color = tuple(int(v) for v in colors[1])

    # static wide region on the left 2/3 of the canvas
    x0, x1 = 2.0, 39.0 + rng.uniform(0, 2)
    y0, y1 = 13.0 + rng.uniform(0, 2), 51.0 + rng.uniform(0, 2)
    big = ShapeSpec(
        regions=(
            Region("polygon", ((x0, y0), (x1, y0), (x1, y1), (x0, y1)), big_color),
        ),
        pivot=((x0 + x1) / 2, (y0 + y1) / 2),
        motions=_linear_motion(frame_count, 0.0, 0.0),
    )

    # two vertical bars taller than the region, parked at the right edge,
    # sweeping left fast enough to cut the region twice by the last frame
    bw = 4.0 + rng.uniform(0, 1)
    gap = 9.0 + rng.uniform(0, 2)
    bx = 42.0
    speed = -(bx - 12.0) / (frame_count - 1)
    bars = []
    for b in range(2):
        bx0 = bx + b * (bw + gap)
        bars.append(
            Region(
                "polygon",
                ((bx0, 6.0), (bx0 + bw, 6.0), (bx0 + bw, 58.0), (bx0, 58.0)),
                bar_color,
            )
        )
    occluder = ShapeSpec(
        regions=tuple(bars),
        pivot=(bx, 32.0),
        motions=_linear_motion(frame_count, speed, 0.0),
    )

    # distractor strips, static, sized like the fragments the bars create
    distractors = []
    for d in range(2):
        dc = tuple(int(v) for v in colors[2 + d])
        dx0 = 44.0 + d * 10
        dy0, dy1 = 2.0, 10.0
        distractors.append(
            ShapeSpec(
                regions=(
                    Region(
                        "polygon",
                        ((dx0, dy0), (dx0 + 7, dy0), (dx0 + 7, dy1), (dx0, dy1)),
                        dc,
                    ),
                ),
                pivot=(dx0 + 3.5, (dy0 + dy1) / 2),
                motions=_linear_motion(frame_count, 0.0, 0.0),
            )
        )

    return ClipSpec(
        frame_count=frame_count,
        width=size,
        height=size,
        background=(255, 255, 255),
        shapes=(big, *distractors, occluder),
        seed=seed,
    )


def spec_to_json(spec: ClipSpec) -> dict:
    return {
        "frame_count": spec.frame_count,
        "width": spec.width,
        "height": spec.height,
        "background": list(spec.background),
        "seed": spec.seed,
        "line_radius": spec.line_radius,
        "color_lines": spec.color_lines,
        "shapes": [
            {
                "pivot": list(s.pivot),
                "motions": [list(m) for m in s.motions],
                "regions": [
                    {
                        "kind": r.kind,
                        "geometry": np.asarray(r.geometry).tolist(),
                        "color": list(r.color),
                        "role": r.role,
                    }
                    for r in s.regions
                ],
            }
            for s in spec.shapes
        ],
    }


def write_clip(spec: ClipSpec, out_dir: str | Path) -> list[Path]:
    """Render a clip to disk: frame PNGs, segment maps, labelings, and a
    manifest tying them together."""
    from . import pngio

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames = generate_clip(spec)
    names = []
    for i, f in enumerate(frames):
        stem = f"frame_{i:03d}"
        pngio.save_rgb(f.flat, out / f"{stem}_flat.png")
        from .raster import render_lines

        pngio.save_rgb(render_lines(f.lines), out / f"{stem}_lines.png")
        pngio.save_rgb(gt_colored(f), out / f"{stem}_gt.png")
        pngio.save_segmap(
            f.segmap, out / f"{stem}_seg.png", out / f"{stem}_seg.json"
        )
        pngio.save_labeling(f.labeling, out / f"{stem}_labeling.json")
        names.append(stem)
    manifest = {
        "frames": names,
        "seed": spec.seed,
        "spec": spec_to_json(spec),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return [out / f"{n}_gt.png" for n in names]
