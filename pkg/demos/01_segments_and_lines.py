"""Rasters and segments: the paint bucket's view of a frame.

Quantizes an RGB frame to the four-color scan palette, splits the blank
area into line-enclosed segments, and inspects the adjacency relation
that later drives label merging. Writes visuals to demos/out/01/.
"""

from pathlib import Path

import numpy as np

from inkprop import pngio
from inkprop.raster import (
    adjacency,
    extract_segments,
    fill_segments,
    quantize_lines,
    render_lines,
)
from inkprop.synthesis import generate_clip, toy_translating_spec

out = Path(__file__).parent / "out" / "01"
out.mkdir(parents=True, exist_ok=True)

# a synthetic frame stands in for a scanned drawing
frame = generate_clip(toy_translating_spec(1))[0]
scan = render_lines(frame.lines)
pngio.save_rgb(scan, out / "scan.png")

lines = quantize_lines(scan, tolerance=32)
print(f"quantized classes present: {sorted(np.unique(lines.classes))}")

seg = extract_segments(lines)
print(f"{seg.n_segments} segments; areas {sorted(r.area for r in seg.records)}")

# paint every segment a random color to see the partition
rng = np.random.default_rng(0)
colors = rng.integers(40, 255, size=(seg.n_segments, 3)).astype(np.uint8)
pngio.save_rgb(fill_segments(seg, colors), out / "partition.png")
pngio.save_segmap(seg, out / "segmap.png", out / "segmap.json")

# synthesized frames draw 2-px boundary bands, so reach one pixel further
adj = adjacency(seg, max_chebyshev=3)
print(f"{len(adj)} adjacent segment pairs; strongest borders:")
for (a, b), count in sorted(adj.items(), key=lambda kv: -kv[1])[:5]:
    print(f"  segments {a} and {b} share a {count}-pair border")

print(f"artifacts in {out}")
