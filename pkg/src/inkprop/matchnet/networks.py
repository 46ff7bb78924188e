"""Offset and feature networks (Fig. 6's architecture).

The target frame's warped colors are aligned to its line art by a
deformable convolution whose offsets come from a lightweight U-Net over
[lines, colors]; the reference frame runs the same machinery with offsets
pinned to zero. Aligned color and line embeddings feed a U-Net encoder,
the semantic grid joins at the bottleneck, and the decoder returns
C-channel full-resolution features.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import (
    ParamStore,
    Tensor,
    bilinear_resize_const,
    concat,
    conv2d,
    deformable_conv,
    he_uniform,
    upsample2x,
)
from ..errors import ShapeMismatch
from ..raster import LineArtRaster, RgbRaster
from .config import ModelConfig

N_LINE_CLASSES = 5


def _add_conv(store: ParamStore, rng, name: str, cin: int, cout: int, k: int, zero=False):
    if zero:
        store.add(f"{name}.w", np.zeros((cout, cin, k, k)))
    else:
        store.add(f"{name}.w", he_uniform(rng, (cout, cin, k, k), cin * k * k))
    store.add(f"{name}.b", np.zeros(cout))


def _add_linear(store: ParamStore, rng, name: str, cin: int, cout: int, init="he"):
    if init == "zero":
        store.add(f"{name}.w", np.zeros((cin, cout)))
    elif init == "xavier":
        limit = np.sqrt(3.0 / cin)  # variance-preserving without a ReLU after
        store.add(f"{name}.w", rng.uniform(-limit, limit, size=(cin, cout)))
    else:
        store.add(f"{name}.w", he_uniform(rng, (cin, cout), cin))
    store.add(f"{name}.b", np.zeros(cout))


def _conv(store: ParamStore, name: str, x: Tensor, stride=1, padding=1) -> Tensor:
    return conv2d(x, store[f"{name}.w"], store[f"{name}.b"], stride=stride, padding=padding)


def _linear(store: ParamStore, name: str, x: Tensor) -> Tensor:
    out = x @ store[f"{name}.w"]
    return out + store[f"{name}.b"]


def _init_unet(store, rng, prefix, cin, level_channels, bottleneck, cout, k, zero_head):
    chans = list(level_channels)
    _add_conv(store, rng, f"{prefix}.stem", cin, chans[0], k)
    for i in range(1, len(chans)):
        _add_conv(store, rng, f"{prefix}.down{i}", chans[i - 1], chans[i], k)
    _add_conv(store, rng, f"{prefix}.down{len(chans)}", chans[-1], bottleneck, k)
    up_in = bottleneck
    for i in reversed(range(len(chans))):
        _add_conv(store, rng, f"{prefix}.up{i}", up_in + chans[i], chans[i], k)
        up_in = chans[i]
    _add_conv(store, rng, f"{prefix}.head", chans[0], cout, k, zero=zero_head)


def _run_unet(store, prefix, x: Tensor, n_levels: int, bottleneck_extra=None) -> Tensor:
    """Encoder-decoder with skip connections. ``bottleneck_extra`` is an
    optional constant tensor concatenated at the lowest resolution (the
    semantic grid); when present, "{prefix}.fuse" folds it back to the
    bottleneck width."""
    skips = []
    x = _conv(store, f"{prefix}.stem", x).elu()
    skips.append(x)
    for i in range(1, n_levels):
        x = _conv(store, f"{prefix}.down{i}", x, stride=2).elu()
        skips.append(x)
    x = _conv(store, f"{prefix}.down{n_levels}", x, stride=2).elu()
    if bottleneck_extra is not None:
        grid = bilinear_resize_const(bottleneck_extra, x.shape[1], x.shape[2])
        x = concat([x, Tensor(grid)], axis=0)
        x = _conv(store, f"{prefix}.fuse", x).elu()
    for i in reversed(range(n_levels)):
        x = upsample2x(x)
        x = concat([x, skips[i]], axis=0)
        x = _conv(store, f"{prefix}.up{i}", x).elu()
    return _conv(store, f"{prefix}.head", x)


def init_params(cfg: ModelConfig, rng) -> ParamStore:
    """All learnable weights: embeddings, offset net (zero-initialized
    head, so deformable conv starts as plain convolution), feature net,
    bbox MLP, and the transformer stack."""
    store = ParamStore()
    k = cfg.kernel
    e = cfg.embed_channels
    c = cfg.channels

    _add_conv(store, rng, "embed.line", N_LINE_CLASSES, e, k)
    _add_conv(store, rng, "embed.color", 3, e, k, zero=False)

    _init_unet(
        store, rng, "offset",
        N_LINE_CLASSES + 3, cfg.offset_channels, cfg.offset_bottleneck,
        2 * k * k, k, zero_head=True,
    )
    _init_unet(
        store, rng, "feat",
        2 * e, cfg.feature_channels, cfg.feature_bottleneck,
        c, k, zero_head=False,
    )
    _add_conv(
        store, rng, "feat.fuse",
        cfg.feature_bottleneck + cfg.semantic_channels, cfg.feature_bottleneck, k,
    )

    _add_linear(store, rng, "token.mlp0", 4, cfg.bbox_hidden)
    _add_linear(store, rng, "token.mlp1", cfg.bbox_hidden, c, init="xavier")

    # residual branches start at zero (identity transformer at init), so
    # depth never amplifies activations; attention projections are
    # variance-preserving
    for r in range(cfg.transformer_depth):
        for kind in ("self", "cross"):
            for proj in ("q", "k", "v"):
                _add_linear(store, rng, f"tr{r}.{kind}.{proj}", c, c, init="xavier")
            _add_linear(store, rng, f"tr{r}.{kind}.o", c, c, init="zero")
            _add_linear(store, rng, f"tr{r}.{kind}.ff0", c, cfg.ff_hidden)
            _add_linear(store, rng, f"tr{r}.{kind}.ff1", cfg.ff_hidden, c, init="zero")
    return store


def lines_one_hot(lines: LineArtRaster) -> np.ndarray:
    """[5,H,W] one-hot planes over {Blank, Black, Red, Blue, Green}."""
    h, w = lines.classes.shape
    out = np.zeros((N_LINE_CLASSES, h, w))
    for cls in range(N_LINE_CLASSES):
        out[cls] = lines.classes == cls
    return out


def colors_unit(frame: RgbRaster) -> np.ndarray:
    return frame.pixels.astype(np.float64).transpose(2, 0, 1) / 255.0


def _pad_multiple(arr: np.ndarray, multiple: int) -> np.ndarray:
    h, w = arr.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return arr
    pad = [(0, 0)] * (arr.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(arr, pad)


def extract_features(
    lines: LineArtRaster,
    coarse_colors: RgbRaster,
    store: ParamStore,
    cfg: ModelConfig,
    side: str,
    semantic: np.ndarray | None = None,
) -> Tensor:
    """Full-resolution C-channel features for one frame.

    side="target": offsets predicted from [lines, coarse colors];
    side="reference": offsets identically zero (coarse_colors is the
    recolorized reference itself). ``semantic`` defaults to the builtin
    descriptor of ``lines``.
    """
    if side not in ("reference", "target"):
        raise ValueError("side must be 'reference' or 'target'")
    if lines.classes.shape != coarse_colors.pixels.shape[:2]:
        raise ShapeMismatch("lines and coarse colors must share dimensions")
    if semantic is None:
        from .semantic import builtin_descriptor

        semantic = builtin_descriptor(lines)
    if semantic.shape[0] != cfg.semantic_channels:
        raise ShapeMismatch(
            f"semantic grid has {semantic.shape[0]} channels, config expects "
            f"{cfg.semantic_channels}"
        )

    h, w = lines.classes.shape
    multiple = 2 ** max(cfg.offset_downs, cfg.feature_downs)
    onehot = _pad_multiple(lines_one_hot(lines), multiple)
    colors = _pad_multiple(colors_unit(coarse_colors), multiple)
    k = cfg.kernel

    if side == "target":
        offsets = _run_unet(
            store, "offset", Tensor(np.concatenate([onehot, colors])), cfg.offset_downs
        )
    else:
        offsets = Tensor(np.zeros((2 * k * k, *onehot.shape[1:])))

    color_feat = deformable_conv(
        Tensor(colors), store["embed.color.w"], offsets, store["embed.color.b"]
    ).elu()
    line_feat = _conv(store, "embed.line", Tensor(onehot)).elu()

    feats = _run_unet(
        store,
        "feat",
        concat([color_feat, line_feat], axis=0),
        cfg.feature_downs,
        bottleneck_extra=semantic,
    )
    return feats[:, :h, :w]


def predict_offsets(
    lines: LineArtRaster, coarse_colors: RgbRaster, store: ParamStore, cfg: ModelConfig
) -> Tensor:
    """The offset net's raw output (exposed so tests can assert the
    reference-side zero-offset rule against the target-side path)."""
    multiple = 2 ** max(cfg.offset_downs, cfg.feature_downs)
    onehot = _pad_multiple(lines_one_hot(lines), multiple)
    colors = _pad_multiple(colors_unit(coarse_colors), multiple)
    return _run_unet(
        store, "offset", Tensor(np.concatenate([onehot, colors])), cfg.offset_downs
    )
