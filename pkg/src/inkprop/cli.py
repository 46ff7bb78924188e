"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import InkpropError

DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors by default; the contract is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    p = _Parser(prog="inkprop", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    synth = sub.add_parser("synth", help="generate synthetic clips with ground truth")
    synth.add_argument("--kind", choices=["translating", "occlusion"], default="translating")
    synth.add_argument("--clips", type=int, default=1)
    synth.add_argument("--frames", type=int, default=4)
    synth.add_argument("--size", type=int, default=64)
    synth.add_argument("--colors", type=int, default=2)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)

    seg = sub.add_parser("segment", help="quantize line art and extract segments")
    seg.add_argument("image")
    seg.add_argument("--tolerance", type=int, default=32)
    seg.add_argument("--seed", type=int, default=0)
    seg.add_argument("--out", required=True)

    flow = sub.add_parser("flow", help="estimate flow between two line arts")
    flow.add_argument("--ref", required=True)
    flow.add_argument("--tgt", required=True)
    flow.add_argument("--method", choices=["blockmatch", "file"], default="blockmatch")
    flow.add_argument("--path", help="IFLO input for --method file")
    flow.add_argument("--block", type=int, default=16)
    flow.add_argument("--radius", type=int, default=24)
    flow.add_argument("--seed", type=int, default=0)
    flow.add_argument("--out", required=True)

    match = sub.add_parser("match", help="colorize one target frame from a reference")
    match.add_argument("--ref-lines", required=True)
    match.add_argument("--ref-colors", required=True)
    match.add_argument("--tgt-lines", required=True)
    match.add_argument("--checkpoint")
    match.add_argument("--backend", choices=["neural", "hu"], default="hu")
    match.add_argument("--threshold", type=float)
    match.add_argument("--profile", choices=["desk", "paper"], default="desk")
    match.add_argument("--seed", type=int, default=0)
    match.add_argument("--out", required=True)

    prop = sub.add_parser("propagate", help="colorize a whole clip from frame 0")
    prop.add_argument("--frames", required=True, help="directory of ordered line-art PNGs")
    prop.add_argument("--ref-colors", required=True)
    prop.add_argument("--checkpoint")
    prop.add_argument("--backend", choices=["neural", "hu"], default="hu")
    prop.add_argument("--mode", choices=["chain", "fixed"], default="chain")
    prop.add_argument("--threshold", type=float)
    prop.add_argument("--profile", choices=["desk", "paper"], default="desk")
    prop.add_argument("--seed", type=int, default=0)
    prop.add_argument("--out", required=True)

    train = sub.add_parser("train", help="train the matcher on generated toy clips")
    train.add_argument("--steps", type=int, default=500)
    train.add_argument("--train-clips", type=int, default=20)
    train.add_argument("--held-clips", type=int, default=5)
    train.add_argument("--lr", type=float, default=1e-3)
    train.add_argument("--seed", type=int, default=7)
    train.add_argument("--augment", help="AugmentConfig JSON file")
    train.add_argument("--out", required=True)

    grad = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    grad.add_argument("--profile", choices=["desk", "tiny"], default="desk")
    grad.add_argument("--seed", type=int, default=0)

    ev = sub.add_parser("eval", help="score predictions against ground truth")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--background", help="hex background color, e.g. '#ffffff'")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", help="write the JSON report here")

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--state", help="state root (default $INKPROP_STATE or ./inkprop-state)")
    serve.add_argument("--checkpoint")
    serve.add_argument("--profile", choices=["desk", "paper"], default="desk")
    serve.add_argument("--seed", type=int, default=0)
    return p


def _load_lines(path: str, tolerance: int = 32):
    from . import pngio
    from .raster import quantize_lines

    return quantize_lines(pngio.load_rgb(path), tolerance)


def _config(profile: str):
    from .matchnet import ModelConfig

    return {"desk": ModelConfig.desk, "paper": ModelConfig, "tiny": ModelConfig.tiny}[
        profile
    ]()


def _cmd_synth(args) -> int:
    from .synthesis import toy_occlusion_spec, toy_translating_spec, write_clip

    out = Path(args.out)
    for c in range(args.clips):
        seed = args.seed + c
        if args.kind == "translating":
            spec = toy_translating_spec(
                seed, frame_count=args.frames, size=args.size, n_colors=args.colors
            )
        else:
            spec = toy_occlusion_spec(seed, frame_count=args.frames, size=args.size)
        clip_dir = out / f"clip_{c:03d}" if args.clips > 1 else out
        write_clip(spec, clip_dir)
        print(f"wrote {spec.frame_count} frames to {clip_dir}")
    return 0


def _cmd_segment(args) -> int:
    from . import pngio
    from .raster import extract_segments

    lines = _load_lines(args.image, args.tolerance)
    seg = extract_segments(lines)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.image).stem
    pngio.save_segmap(seg, out / f"{stem}_seg.png", out / f"{stem}_seg.json")
    print(f"{seg.n_segments} segments -> {out / (stem + '_seg.png')}")
    return 0


def _cmd_flow(args) -> int:
    from .flowwarp import estimate_flow, save_flow

    ref = _load_lines(args.ref)
    tgt = _load_lines(args.tgt)
    flow = estimate_flow(
        ref, tgt, method=args.method, block=args.block, radius=args.radius,
        path=args.path,
    )
    save_flow(flow, args.out)
    v = flow.vectors
    print(
        f"flow {flow.width}x{flow.height}, |v| mean {np.hypot(v[..., 0], v[..., 1]).mean():.2f}"
        f" -> {args.out}"
    )
    return 0


def _load_store(args):
    from .autodiff import load_params

    if args.backend == "neural":
        if not args.checkpoint:
            raise InkpropError("--backend neural needs --checkpoint")
        store, _ = load_params(args.checkpoint)
        return store
    return None


def _cmd_match(args) -> int:
    from . import pngio
    from .matchnet import hu_match, match_pair
    from .matchnet.pipeline import reference_regions_from_coloring
    from .raster import extract_segments, merge_color_lines_structural

    cfg = _config(args.profile)
    store = _load_store(args)
    ref_lines = _load_lines(args.ref_lines)
    tgt_lines = _load_lines(args.tgt_lines)
    ref_colored = pngio.load_rgb(args.ref_colors)
    ref_seg = merge_color_lines_structural(extract_segments(ref_lines))
    ref_lab = reference_regions_from_coloring(ref_seg, ref_colored)

    thr = cfg.match_threshold if args.threshold is None else args.threshold
    if args.backend == "hu":
        tgt_seg = merge_color_lines_structural(extract_segments(tgt_lines))
        result = hu_match((ref_seg, ref_lab), tgt_seg, threshold=thr)
    else:
        result, _, _ = match_pair(
            ref_seg, ref_lab, ref_lines, tgt_lines, store, cfg,
            np.random.default_rng(args.seed), threshold=thr,
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pngio.save_rgb(result.raster, out / "match.png")
    (out / "match.json").write_text(json.dumps(result.to_json(), indent=1))
    print(
        f"matched {len(result.segment_ids) - len(result.unmatched)}"
        f"/{len(result.segment_ids)} segments -> {out}"
    )
    return 0


def _cmd_propagate(args) -> int:
    from . import pngio
    from .matchnet import propagate_clip

    cfg = _config(args.profile)
    store = _load_store(args)
    frame_paths = sorted(Path(args.frames).glob("*.png"))
    if not frame_paths:
        raise InkpropError(f"no PNG frames in {args.frames}")
    lines = [_load_lines(str(p)) for p in frame_paths]
    ref_colored = pngio.load_rgb(args.ref_colors)
    outputs, results = propagate_clip(
        lines, ref_colored, store, cfg,
        mode=args.mode, threshold=args.threshold, backend=args.backend,
        rng=np.random.default_rng(args.seed),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, (raster, result) in enumerate(zip(outputs, results)):
        pngio.save_rgb(raster, out / f"{i:03d}.png")
        (out / f"{i:03d}.json").write_text(json.dumps(result.to_json(), indent=1))
    unmatched = sum(len(r.unmatched) for r in results)
    print(f"propagated {len(outputs)} frames ({unmatched} unmatched segments) -> {out}")
    return 0


def _cmd_train(args) -> int:
    from .augment import AugmentConfig
    from .autodiff import save_params
    from .matchnet import ModelConfig
    from .matchnet.train import train_toy
    from .synthesis import generate_clip, toy_translating_spec

    cfg = ModelConfig.desk()
    if args.augment:
        aug = AugmentConfig.from_json(json.loads(Path(args.augment).read_text()))
    else:
        aug = AugmentConfig(
            translation=(-4, 4), rotation=(-0.1, 0.1), resize=(1.0, 1.0), crop=56
        )
    train_clips = [
        generate_clip(toy_translating_spec(args.seed * 1000 + s))
        for s in range(args.train_clips)
    ]
    held = [
        generate_clip(toy_translating_spec(args.seed * 1000 + 500 + s))
        for s in range(args.held_clips)
    ]
    store, stats = train_toy(
        train_clips, cfg, aug, steps=args.steps, seed=args.seed, lr=args.lr,
        eval_clips=held, eval_every=100, target_accuracy=0.95,
        min_steps=min(500, args.steps), lr_decay_step=500,
    )
    save_params(store, args.out, meta={"profile": "desk", "config": cfg.to_json()})
    for step, acc in zip(stats.eval_steps, stats.eval_accuracy):
        print(f"step {step}: held-out segment accuracy {acc:.4f}")
    print(
        f"trained {stats.steps_run} steps in {stats.seconds:.1f}s -> {args.out}"
    )
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradsuite import run_gradient_suite

    worst, lines = run_gradient_suite(profile=args.profile, seed=args.seed)
    for line in lines:
        print(line)
    print(f"max relative error: {worst:.3e}")
    if worst >= 1e-4:
        print("FAIL: gradient suite exceeded 1e-4", file=sys.stderr)
        return DATA_ERROR
    return 0


def _cmd_eval(args) -> int:
    from . import pngio
    from .metrics import evaluate_clip, report_text

    pred_paths = sorted(Path(args.pred).glob("*.png"))
    gt_paths = sorted(Path(args.gt).glob("*.png"))
    if not pred_paths or len(pred_paths) != len(gt_paths):
        raise InkpropError(
            f"{len(pred_paths)} prediction PNGs vs {len(gt_paths)} ground truths"
        )
    preds = [pngio.load_rgb(p) for p in pred_paths]
    gts = [pngio.load_rgb(p) for p in gt_paths]
    background = pngio.hex_to_color(args.background) if args.background else None
    agg, frames = evaluate_clip(preds, gts, background=background)
    print(report_text(agg))
    report = {
        "aggregate": agg.to_json(),
        "frames": [f.to_json() for f in frames],
    }
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=1))
        print(f"report -> {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import os

    import uvicorn

    from .service import create_app

    state = args.state or os.environ.get("INKPROP_STATE") or "inkprop-state"
    app = create_app(state, checkpoint=args.checkpoint, cfg=_config(args.profile))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "segment": _cmd_segment,
    "flow": _cmd_flow,
    "match": _cmd_match,
    "propagate": _cmd_propagate,
    "train": _cmd_train,
    "gradcheck": _cmd_gradcheck,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (InkpropError, FileNotFoundError, ValueError) as exc:
        print(f"inkprop: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
