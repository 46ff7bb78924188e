"""Training-time augmentation: label merging, geometry, min-pooling.

Shows the 20% adjacent-label merging that teaches inclusion (a merged
region means "any of these is the right answer"), an augmented pair, and
why plain nearest-neighbor resizing would eat 1-px lines while
min-pooling keeps them. Writes demos/out/04/.
"""

from pathlib import Path

import numpy as np

from inkprop import pngio
from inkprop.augment import (
    AugmentConfig,
    geo_augment,
    merge_labels,
    minpool_resize,
    nn_resize_classes,
)
from inkprop.raster import LineArtRaster, LineClass, adjacency, region_adjacency, render_lines
from inkprop.synthesis import generate_clip, toy_translating_spec

out = Path(__file__).parent / "out" / "04"
out.mkdir(parents=True, exist_ok=True)
rng = np.random.default_rng(0)

clip = generate_clip(toy_translating_spec(2))
frame = clip[0]

print("== adjacent-label merging ==")
adj = region_adjacency(adjacency(frame.segmap, max_chebyshev=3), frame.labeling)
for trial in range(3):
    merged, mapping = merge_labels(frame.labeling, adj, 0.2, rng)
    print(f"trial {trial}: {frame.labeling.n_regions} regions -> {merged.n_regions}")

print("== geometric pair augmentation ==")
cfg = AugmentConfig(
    translation=(-4, 4), rotation=(-0.15, 0.15), resize=(0.85, 1.0), crop=48
)
a, b = geo_augment((clip[0], clip[1]), cfg, rng)
pngio.save_rgb(a.flat, out / "augmented_ref.png")
pngio.save_rgb(b.flat, out / "augmented_tgt.png")
print(f"augmented pair cropped to {a.flat.width}x{a.flat.height}, "
      f"{a.segmap.n_segments}/{b.segmap.n_segments} segments")

print("== min-pooling vs nearest neighbor ==")
classes = np.zeros((64, 64), dtype=np.uint8)
classes[20, 4:60] = LineClass.BLACK  # a 1-px line off the NN sample lattice
la = LineArtRaster(classes)
nn = nn_resize_classes(la.classes, 32, 32)
mp = minpool_resize(la, 32, 32)
print(f"half-scale: nearest neighbor keeps {int((nn != 0).sum())} line px, "
      f"min-pooling keeps {int((mp.classes != 0).sum())}")
pngio.save_rgb(render_lines(mp), out / "minpooled_half.png")
print(f"artifacts in {out}")
