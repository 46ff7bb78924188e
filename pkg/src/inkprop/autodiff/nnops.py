"""Structured network ops: convolution, bilinear sampling, deformable
convolution, resolution changes, and per-segment pooling.

conv2d and deformable_conv share the same im2col contraction (column
layout (channel, tap-row, tap-col) and a single GEMM), which is what makes
the zero-offset deformable path bit-identical to plain convolution.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor, _ensure_finite


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    c = xp.shape[0]
    cols = np.empty((c, kh, kw, ho, wo), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i : i + ho * stride : stride, j : j + wo * stride : stride]
    return cols.reshape(c * kh * kw, ho * wo)


def _col2im(dcols: np.ndarray, c, hp, wp, kh, kw, stride, ho, wo) -> np.ndarray:
    d = dcols.reshape(c, kh, kw, ho, wo)
    out = np.zeros((c, hp, wp), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out[:, i : i + ho * stride : stride, j : j + wo * stride : stride] += d[:, i, j]
    return out


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of [C,H,W] with [Co,C,kh,kw] (+ optional bias)."""
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise ShapeMismatch("conv2d expects x[C,H,W], w[Co,C,kh,kw]")
    c, h, wd = x.data.shape
    co, c2, kh, kw = w.data.shape
    if c2 != c:
        raise ShapeMismatch(f"conv2d channels: input {c}, weights expect {c2}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeMismatch("conv2d output would be empty")
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    w_mat = w.data.reshape(co, -1)
    out_mat = w_mat @ cols
    if b is not None:
        out_mat = out_mat + b.data[:, None]
    out_data = out_mat.reshape(co, ho, wo)

    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        g_mat = g.reshape(co, -1)
        if w.requires_grad:
            w._accumulate((g_mat @ cols.T).reshape(w.data.shape))
        if b is not None and b.requires_grad:
            b._accumulate(g_mat.sum(axis=1))
        if x.requires_grad:
            dcols = w_mat.T @ g_mat
            dxp = _col2im(dcols, c, h + 2 * padding, wd + 2 * padding, kh, kw, stride, ho, wo)
            if padding:
                dxp = dxp[:, padding:-padding, padding:-padding]
            x._accumulate(dxp)

    return Tensor(out_data, _parents=parents, _backward=backward, _op="conv2d")


def _bilinear_gather(grid: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Shared forward machinery: values [C, N] plus everything backward
    needs. Zero padding outside the grid."""
    c, h, w = grid.shape
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    wx = x - x0
    wy = y - y0

    corners = []
    for dy, dx, wgt in (
        (0, 0, (1 - wx) * (1 - wy)),
        (0, 1, wx * (1 - wy)),
        (1, 0, (1 - wx) * wy),
        (1, 1, wx * wy),
    ):
        cy = y0 + dy
        cx = x0 + dx
        valid = (cy >= 0) & (cy < h) & (cx >= 0) & (cx < w)
        vy = np.clip(cy, 0, h - 1)
        vx = np.clip(cx, 0, w - 1)
        vals = grid[:, vy, vx] * valid  # [C, N]
        corners.append((vals, wgt, vy, vx, valid))

    out = np.zeros_like(corners[0][0])
    for vals, wgt, *_ in corners:
        out = out + vals * wgt
    return out, corners, wx, wy


def bilinear_sample(grid: Tensor, positions: Tensor) -> Tensor:
    """Sample [C,H,W] at N fractional (x, y) positions → [N, C].

    Zero-padded outside; differentiable in both the grid and the
    positions."""
    if positions.data.ndim != 2 or positions.data.shape[1] != 2:
        raise ShapeMismatch("positions must be [N,2]")
    c, h, w = grid.data.shape
    x = positions.data[:, 0]
    y = positions.data[:, 1]
    out_cn, corners, wx, wy = _bilinear_gather(grid.data, x, y)
    out_data = out_cn.T  # [N, C]

    def backward(g):
        g_cn = g.T  # [C, N]
        if grid.requires_grad:
            dgrid = np.zeros(c * h * w)
            for vals, wgt, vy, vx, valid in corners:
                idx = (vy * w + vx)[valid]
                contrib = (g_cn * wgt)[:, valid]
                full_idx = (np.arange(c)[:, None] * (h * w) + idx[None, :]).ravel()
                dgrid += np.bincount(full_idx, weights=contrib.ravel(), minlength=c * h * w)
            grid._accumulate(dgrid.reshape(c, h, w))
        if positions.requires_grad:
            v00, v10, v01, v11 = (cr[0] for cr in corners)
            dout_dx = (1 - wy) * (v10 - v00) + wy * (v11 - v01)
            dout_dy = (1 - wx) * (v01 - v00) + wx * (v11 - v10)
            dpos = np.stack(
                [(g_cn * dout_dx).sum(axis=0), (g_cn * dout_dy).sum(axis=0)], axis=1
            )
            positions._accumulate(dpos)

    return Tensor(out_data, _parents=(grid, positions), _backward=backward, _op="bilinear")


def deformable_conv(x: Tensor, w: Tensor, offsets: Tensor, b: Tensor | None = None) -> Tensor:
    """Convolution whose k² taps are displaced by learned per-pixel offsets
    and read through bilinear sampling; stride 1, same-size output.

    ``offsets`` is [2k², H, W]: channels (2t, 2t+1) are the (dx, dy) shift
    of tap t in row-major tap order. With all-zero offsets this reduces
    exactly (bit-for-bit) to conv2d(x, w, b, stride=1, padding=k//2).
    """
    c, h, wd = x.data.shape
    co, c2, kh, kw = w.data.shape
    if kh != kw:
        raise ShapeMismatch("deformable_conv expects square kernels")
    if c2 != c:
        raise ShapeMismatch("deformable_conv channel mismatch")
    k2 = kh * kw
    if offsets.data.shape != (2 * k2, h, wd):
        raise ShapeMismatch(
            f"offsets must be [2k²,H,W] = {(2 * k2, h, wd)}, got {offsets.data.shape}"
        )
    pad = kh // 2

    yy, xx = np.mgrid[0:h, 0:wd]
    taps = [(i - pad, j - pad) for i in range(kh) for j in range(kw)]
    pos_x = np.empty((k2, h * wd))
    pos_y = np.empty((k2, h * wd))
    for t, (di, dj) in enumerate(taps):
        pos_x[t] = (xx + dj + offsets.data[2 * t]).ravel()
        pos_y[t] = (yy + di + offsets.data[2 * t + 1]).ravel()

    sampled, corners, wx, wy = _bilinear_gather(
        x.data, pos_x.ravel(), pos_y.ravel()
    )  # [C, k2*H*W]
    # (channel, tap) order matches conv2d's (channel, ki, kj); the explicit
    # C-contiguous copy matters: fancy indexing yields F-ordered arrays and
    # a differently-strided GEMM operand breaks the bit-for-bit zero-offset
    # reduction to conv2d
    cols = np.ascontiguousarray(
        sampled.reshape(c, k2, h * wd).reshape(c * k2, h * wd)
    )
    w_mat = w.data.reshape(co, -1)
    out_mat = w_mat @ cols
    if b is not None:
        out_mat = out_mat + b.data[:, None]
    out_data = out_mat.reshape(co, h, wd)

    parents = (x, w, offsets) if b is None else (x, w, offsets, b)

    def backward(g):
        g_mat = g.reshape(co, -1)
        if w.requires_grad:
            w._accumulate((g_mat @ cols.T).reshape(w.data.shape))
        if b is not None and b.requires_grad:
            b._accumulate(g_mat.sum(axis=1))
        if x.requires_grad or offsets.requires_grad:
            dcols = (w_mat.T @ g_mat).reshape(c, k2 * h * wd)  # [C, k2*HW]
            if x.requires_grad:
                dgrid = np.zeros(c * h * wd)
                for vals, wgt, vy, vx, valid in corners:
                    idx = (vy * wd + vx)[valid]
                    contrib = (dcols * wgt)[:, valid]
                    full_idx = (
                        np.arange(c)[:, None] * (h * wd) + idx[None, :]
                    ).ravel()
                    dgrid += np.bincount(
                        full_idx, weights=contrib.ravel(), minlength=c * h * wd
                    )
                x._accumulate(dgrid.reshape(c, h, wd))
            if offsets.requires_grad:
                v00, v10, v01, v11 = (cr[0] for cr in corners)
                dout_dx = (1 - wy) * (v10 - v00) + wy * (v11 - v01)
                dout_dy = (1 - wx) * (v01 - v00) + wx * (v11 - v10)
                dx_flat = (dcols * dout_dx).sum(axis=0).reshape(k2, h, wd)
                dy_flat = (dcols * dout_dy).sum(axis=0).reshape(k2, h, wd)
                doff = np.empty_like(offsets.data)
                doff[0::2] = dx_flat
                doff[1::2] = dy_flat
                offsets._accumulate(doff)

    return Tensor(out_data, _parents=parents, _backward=backward, _op="deformable_conv")


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbor ×2 upsampling of [C,H,W]."""
    out_data = x.data.repeat(2, axis=1).repeat(2, axis=2)

    def backward(g):
        if x.requires_grad:
            c, h2, w2 = g.shape
            x._accumulate(g.reshape(c, h2 // 2, 2, w2 // 2, 2).sum(axis=(2, 4)))

    return Tensor(out_data, _parents=(x,), _backward=backward, _op="upsample2x")


def segment_pool(features: Tensor, index_map: np.ndarray, n_segments: int) -> Tensor:
    """Mean of [C,H,W] features over each segment's pixel mask → [N, C].

    ``index_map`` is the SegmentMap id plane (−1 = line pixels, ignored).
    Every id in [0, n_segments) must own at least one pixel.
    """
    c = features.data.shape[0]
    flat_idx = index_map.ravel()
    valid = flat_idx >= 0
    idx = flat_idx[valid].astype(np.int64)
    areas = np.bincount(idx, minlength=n_segments).astype(np.float64)
    if (areas == 0).any():
        raise ShapeMismatch("segment_pool: empty segment in index map")
    feat_flat = features.data.reshape(c, -1)[:, valid]  # [C, P]
    sums = np.stack(
        [np.bincount(idx, weights=feat_flat[ch], minlength=n_segments) for ch in range(c)],
        axis=1,
    )  # [N, C]
    out_data = sums / areas[:, None]

    def backward(g):
        if features.requires_grad:
            dflat = np.zeros_like(features.data.reshape(c, -1))
            dflat[:, valid] = (g / areas[:, None])[idx].T
            features._accumulate(dflat.reshape(features.data.shape))

    return Tensor(out_data, _parents=(features,), _backward=backward, _op="segment_pool")


def bilinear_resize_const(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Non-differentiable bilinear resize of a constant [C,H,W] array
    (used to drop the semantic grid onto the bottleneck resolution)."""
    c, h, w = grid.shape
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]
    out = (
        grid[:, y0][:, :, x0] * (1 - wy) * (1 - wx)
        + grid[:, y0][:, :, x1] * (1 - wy) * wx
        + grid[:, y1][:, :, x0] * wy * (1 - wx)
        + grid[:, y1][:, :, x1] * wy * wx
    )
    _ensure_finite(out, "bilinear_resize_const")
    return out
