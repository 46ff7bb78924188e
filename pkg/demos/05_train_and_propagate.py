"""End to end: train the inclusion matcher, propagate a clip, score it.

Trains the desk-profile model on generated translating-shapes clips
(a few minutes on one core; pass --quick for a 100-step taste), then
colorizes a held-out occlusion clip with both the trained matcher and the
classical Hu baseline and prints the benchmark table for each.
Writes demos/out/05/.
"""

import sys
import time
from pathlib import Path

import numpy as np

from inkprop import pngio
from inkprop.augment import AugmentConfig
from inkprop.autodiff import save_params
from inkprop.matchnet import ModelConfig, propagate_clip
from inkprop.matchnet.train import train_toy
from inkprop.metrics import evaluate_clip, report_text
from inkprop.synthesis import generate_clip, gt_colored, toy_occlusion_spec, toy_translating_spec

out = Path(__file__).parent / "out" / "05"
out.mkdir(parents=True, exist_ok=True)

quick = "--quick" in sys.argv
steps = 100 if quick else 1000
cfg = ModelConfig.desk()
aug = AugmentConfig(translation=(-4, 4), rotation=(-0.1, 0.1), resize=(1.0, 1.0), crop=56)

print(f"training for up to {steps} steps ({'quick taste' if quick else 'full demo'})...")
train_clips = [generate_clip(toy_translating_spec(s)) for s in range(12)]
held = [generate_clip(toy_translating_spec(100 + s)) for s in range(3)]
t0 = time.time()
store, stats = train_toy(
    train_clips, cfg, aug, steps=steps, seed=7, lr=1e-3,
    eval_clips=held, eval_every=100, target_accuracy=0.98,
)
print(f"{stats.steps_run} steps in {time.time() - t0:.0f}s; held-out accuracy "
      + ", ".join(f"{a:.3f}" for a in stats.eval_accuracy))
save_params(store, out / "model.ckpt", meta={"profile": "desk"})

print("\npropagating a held-out occlusion clip...")
frames = generate_clip(toy_occlusion_spec(3))
lines = [f.lines for f in frames]
reference = gt_colored(frames[0])
gts = [gt_colored(f) for f in frames]

for backend in ("neural", "hu"):
    outs, results = propagate_clip(
        lines, reference, store if backend == "neural" else None, cfg,
        mode="chain", backend=backend, rng=np.random.default_rng(0),
    )
    for i, raster in enumerate(outs):
        pngio.save_rgb(raster, out / f"{backend}_{i}.png")
    agg, _ = evaluate_clip(outs[1:], gts[1:])
    unmatched = sum(len(r.unmatched) for r in results)
    print(f"\n{backend} backend ({unmatched} unmatched segments):")
    print(report_text(agg))

print(f"\nartifacts in {out}")
