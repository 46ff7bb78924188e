"""Coarse color propagation: recolorization, block-match flow, warping.

The reference frame's regions are redistributed onto well-separated
RGB-cube centers, flow is estimated from the line art alone, and the
recolored reference is warped onto the target as the matcher's grouping
evidence. Writes demos/out/03/.
"""

from pathlib import Path

import numpy as np

from inkprop import pngio
from inkprop.flowwarp import estimate_flow, recolor_frame, recolor_regions, warp_colors
from inkprop.synthesis import generate_clip, toy_translating_spec

out = Path(__file__).parent / "out" / "03"
out.mkdir(parents=True, exist_ok=True)

ref, tgt = generate_clip(toy_translating_spec(8))[:2]
rng = np.random.default_rng(0)

K = ref.labeling.n_regions
palette = recolor_regions(K, rng)
print(f"K={K} regions on a grid of side {palette.side:.2f}")
print("cube centers:", [tuple(int(v) for v in c) for c in palette.colors[:4]], "...")

recolored = recolor_frame(ref.labeling.region_of, ref.segmap.ids, palette)
pngio.save_rgb(recolored, out / "reference_recolored.png")

flow = estimate_flow(ref.lines, tgt.lines, block=8, radius=8)
v = flow.vectors
print(f"flow magnitude: mean {np.hypot(v[..., 0], v[..., 1]).mean():.2f} px, "
      f"max {np.hypot(v[..., 0], v[..., 1]).max():.2f} px")

warped = warp_colors(recolored, flow, background=(0, 0, 0))
pngio.save_rgb(warped, out / "warped_onto_target.png")

# how much of the target already wears its region's cube color after the warp
correct = 0
total = 0
for rec in tgt.segmap.records:
    mask = tgt.segmap.ids == rec.id
    gid = tgt.labeling.source_ids[tgt.labeling.region_of[rec.id]]
    if gid in ref.labeling.source_ids:
        want = palette.colors[ref.labeling.source_ids.index(gid)]
        got = warped.pixels[mask]
        correct += int((got == want).all(axis=1).sum())
        total += int(mask.sum())
print(f"warp alone colors {correct / total:.1%} of target segment pixels correctly")
print(f"artifacts in {out}")
