"""The finite-difference gradient suite.

Checks every differentiable op exhaustively on small shapes, then the
full pipeline loss (features → tokens → transformer → similarity →
cross-entropy) on a 32x32 toy pair with seeded coordinate sampling per
parameter tensor. Shared by `inkprop gradcheck` and the acceptance tests.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    Tensor,
    bilinear_sample,
    conv2d,
    deformable_conv,
    grad_check,
    segment_pool,
    upsample2x,
)
from .matchnet import ModelConfig, init_params
from .matchnet.networks import extract_features
from .matchnet.pipeline import inclusion_loss, similarity
from .matchnet.transformer import multiplex_transform, tokenize


def _leaf(rng, shape, scale=1.0):
    return Tensor(rng.normal(size=shape) * scale, requires_grad=True)


def op_checks(rng) -> list[tuple[str, float]]:
    """(name, max rel err) per differentiable op, exhaustive coordinates."""
    results = []

    x = _leaf(rng, (3, 4))
    y = _leaf(rng, (3, 4))
    results.append(
        ("elementwise", grad_check(lambda: ((x * y + x) * 0.5 - y).sum(), [x, y]))
    )

    a = _leaf(rng, (4, 3))
    b = _leaf(rng, (3, 5))
    results.append(("matmul", grad_check(lambda: ((a @ b) * (a @ b)).sum(), [a, b])))

    e = _leaf(rng, (18,), scale=2.0)
    results.append(("elu", grad_check(lambda: (e.elu() * e.elu()).sum(), [e])))

    s = _leaf(rng, (3, 5))
    w_s = rng.normal(size=(3, 5))
    results.append(
        ("softmax", grad_check(lambda: (s.softmax(axis=-1) * w_s).sum(), [s]))
    )
    results.append(
        ("log_softmax", grad_check(lambda: (s.log_softmax(axis=-1) * w_s).sum(), [s]))
    )

    cx = _leaf(rng, (2, 5, 5))
    cw = _leaf(rng, (3, 2, 3, 3), scale=0.5)
    cb = _leaf(rng, (3,))
    results.append(
        (
            "conv2d",
            grad_check(
                lambda: (lambda o: (o * o).sum())(conv2d(cx, cw, cb, padding=1)),
                [cx, cw, cb],
            ),
        )
    )

    grid = _leaf(rng, (2, 5, 5))
    pos = Tensor(rng.uniform(0.55, 3.4, size=(6, 2)), requires_grad=True)
    results.append(
        (
            "bilinear_sample",
            grad_check(
                lambda: (lambda o: (o * o).sum())(bilinear_sample(grid, pos)),
                [grid, pos],
            ),
        )
    )

    dx = _leaf(rng, (2, 5, 5))
    dw = _leaf(rng, (2, 2, 3, 3), scale=0.5)
    doff = Tensor(rng.uniform(0.1, 0.45, size=(18, 5, 5)), requires_grad=True)
    results.append(
        (
            "deformable_conv",
            grad_check(
                lambda: (lambda o: (o * o).sum())(deformable_conv(dx, dw, doff)),
                [dx, dw, doff],
                sample=60,
                rng=np.random.default_rng(0),
            ),
        )
    )

    ux = _leaf(rng, (2, 3, 3))
    results.append(
        (
            "upsample2x",
            grad_check(lambda: (lambda o: (o * o).sum())(upsample2x(ux)), [ux]),
        )
    )

    pf = _leaf(rng, (3, 4, 4))
    index_map = np.array(
        [[0, 0, 1, 1], [0, 0, 1, 1], [-1, -1, 2, 2], [2, 2, 2, 2]], dtype=np.int64
    )
    results.append(
        (
            "segment_pool",
            grad_check(
                lambda: (lambda o: (o * o).sum())(segment_pool(pf, index_map, 3)),
                [pf],
            ),
        )
    )

    xr = _leaf(rng, (3, 6))
    xt = _leaf(rng, (4, 6))
    gt = np.array([0, 2, 1, 0])
    results.append(
        (
            "similarity+loss",
            grad_check(lambda: inclusion_loss(similarity(xr, xt), gt), [xr, xt]),
        )
    )
    return results


def full_pipeline_check(
    profile: str = "tiny", seed: int = 0, sample: int = 6
) -> float:
    """Central differences through the entire loss on a 32x32 pair, a
    seeded handful of coordinates per parameter tensor."""
    from .flowwarp import estimate_flow, recolor_regions, warp_colors
    from .raster import fill_segments
    from .synthesis import generate_clip, toy_translating_spec

    cfg = ModelConfig.tiny() if profile == "tiny" else ModelConfig.desk()
    rng = np.random.default_rng(seed)
    store = init_params(cfg, rng)
    # nudge every parameter off the init point and park the predicted
    # offsets mid-cell: at zero offset the deformable sampler sits exactly
    # on the integer lattice, a kink of the bilinear interpolant where no
    # central difference can match a one-sided derivative
    for name in store.names():
        p = store[name]
        p.data += 0.01 * rng.standard_normal(p.data.shape)
    bias = store["offset.head.b"]
    bias.data[...] = rng.uniform(0.25, 0.45, size=bias.data.shape) * rng.choice(
        [-1.0, 1.0], size=bias.data.shape
    )

    # a 32x32, <=6-segment pair cropped from a toy clip
    clip = generate_clip(toy_translating_spec(5, size=64))
    from .augment import AugmentConfig, geo_augment

    aug = AugmentConfig(
        translation=(-2.0, 2.0), rotation=(-0.05, 0.05), resize=(0.5, 0.5), crop=32
    )
    ref_frame, tgt_frame = geo_augment((clip[0], clip[1]), aug, rng)

    ref_lab = ref_frame.labeling
    palette = recolor_regions(ref_lab.n_regions, rng)
    ref_recolored = fill_segments(
        ref_frame.segmap, palette.colors[ref_lab.region_of]
    )
    flow = estimate_flow(
        ref_frame.lines, tgt_frame.lines, block=cfg.flow_block, radius=cfg.flow_radius
    )
    warped = warp_colors(ref_recolored, flow, background=(0, 0, 0))

    ref_ids = {g: i for i, g in enumerate(ref_lab.source_ids)}
    tgt_lab = tgt_frame.labeling
    rows, gt = [], []
    row = 0
    from .raster import LineClass

    for rec in tgt_frame.segmap.records:
        if rec.kind != LineClass.BLANK:
            continue
        gid = tgt_lab.source_ids[tgt_lab.region_of[rec.id]]
        if gid in ref_ids:
            rows.append(row)
            gt.append(ref_ids[gid])
        row += 1
    rows = np.array(rows)
    gt = np.array(gt)

    def loss_fn():
        feats_ref = extract_features(
            ref_frame.lines, ref_recolored, store, cfg, "reference"
        )
        feats_tgt = extract_features(tgt_frame.lines, warped, store, cfg, "target")
        tok_ref = tokenize(feats_ref, ref_frame.segmap, ref_lab, store, cfg)
        tok_tgt = tokenize(feats_tgt, tgt_frame.segmap, None, store, cfg)
        x_ref, x_tgt = multiplex_transform(tok_ref, tok_tgt, store, cfg)
        return inclusion_loss(similarity(x_ref, x_tgt), gt, rows=rows)

    params = [store[name] for name in store.names()]
    return grad_check(
        loss_fn, params, h=1e-4, sample=sample, rng=np.random.default_rng(seed + 1)
    )


def run_gradient_suite(profile: str = "desk", seed: int = 0):
    """Every op plus the full pipeline; returns (worst error, report lines)."""
    rng = np.random.default_rng(seed)
    lines = []
    worst = 0.0
    for name, err in op_checks(rng):
        lines.append(f"  {name:<18} rel err {err:.3e}")
        worst = max(worst, err)
    pipeline_err = full_pipeline_check(
        profile="tiny" if profile in ("tiny", "desk") else profile, seed=seed
    )
    lines.append(f"  {'full pipeline':<18} rel err {pipeline_err:.3e}")
    worst = max(worst, pipeline_err)
    return worst, lines
