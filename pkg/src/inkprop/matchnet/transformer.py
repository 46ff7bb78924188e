"""Segment tokenization and the multiplex transformer.

Each line-enclosed segment (target side) or region (reference side)
becomes one token: super-pixel-pooled features plus an MLP embedding of
its normalized bounding box. N rounds of {self-attention on each side,
cross-attention in both directions} exchange information between the two
token sets; attention sub-layers and feed-forwards each carry their own
residual. Weights are shared between the two sides (siamese), like the
matching transformers this follows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import ParamStore, Tensor, concat, segment_pool
from ..errors import EmptySegment, ShapeMismatch
from ..raster import LineClass, RegionLabeling, SegmentMap
from .config import ModelConfig
from .networks import _linear


@dataclass(frozen=True)
class TokenSet:
    """Aligned token matrix / normalized bboxes / source ids.

    ids are segment ids (target side) or region indices (grouped
    reference side)."""

    tokens: Tensor  # [N, C]
    bboxes: np.ndarray  # [N, 4] in [0,1]
    ids: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.ids)


def tokenize(
    features: Tensor,
    segmap: SegmentMap,
    group: RegionLabeling | None,
    store: ParamStore,
    cfg: ModelConfig,
) -> TokenSet:
    """Pool features per segment (or per region when ``group`` is given)
    and add the bbox positional embedding.

    Ungrouped tokenization covers the blank (fillable) segments; grouped
    tokenization pools the union of every region's segments, color lines
    included.
    """
    h, w = segmap.ids.shape
    if features.data.shape[1:] != (h, w):
        raise ShapeMismatch("features and segment map must share spatial size")

    if group is None:
        members = [
            [r.id] for r in segmap.records if r.kind == LineClass.BLANK
        ]
        ids = tuple(m[0] for m in members)
    else:
        by_region: dict[int, list[int]] = {}
        for r in segmap.records:
            region = int(group.region_of[r.id])
            if region >= 0:  # -1 = excluded from the inventory
                by_region.setdefault(region, []).append(r.id)
        ids = tuple(sorted(by_region.keys()))
        members = [by_region[i] for i in ids]

    if not members:
        raise EmptySegment("no segments to tokenize")

    index_map = np.full((h, w), -1, dtype=np.int64)
    bboxes = np.empty((len(members), 4))
    for slot, segs in enumerate(members):
        x0 = y0 = np.inf
        x1 = y1 = -np.inf
        for sid in segs:
            index_map[segmap.ids == sid] = slot
            bx0, by0, bx1, by1 = segmap.records[sid].bbox
            x0, y0 = min(x0, bx0), min(y0, by0)
            x1, y1 = max(x1, bx1), max(y1, by1)
        bboxes[slot] = (x0 / w, y0 / h, x1 / w, y1 / h)

    pooled = segment_pool(features, index_map, len(members))
    pos = _linear(store, "token.mlp0", Tensor(bboxes)).elu()
    pos = _linear(store, "token.mlp1", pos)
    return TokenSet(tokens=pooled + pos, bboxes=bboxes, ids=ids)


def attention(
    q_tokens: Tensor, kv_tokens: Tensor, store: ParamStore, prefix: str, cfg: ModelConfig
) -> Tensor:
    """Multi-head scaled dot-product attention [Nq,C] x [Nk,C] -> [Nq,C]."""
    c = cfg.channels
    dh = c // cfg.heads
    scale = 1.0 / np.sqrt(dh)
    q = _linear(store, f"{prefix}.q", q_tokens)
    k = _linear(store, f"{prefix}.k", kv_tokens)
    v = _linear(store, f"{prefix}.v", kv_tokens)
    heads = []
    for hd in range(cfg.heads):
        sl = slice(hd * dh, (hd + 1) * dh)
        scores = (q[:, sl] @ k[:, sl].t()) * scale
        heads.append(scores.softmax(axis=-1) @ v[:, sl])
    return _linear(store, f"{prefix}.o", concat(heads, axis=1))


def _sublayer(x: Tensor, kv: Tensor, store: ParamStore, prefix: str, cfg: ModelConfig) -> Tensor:
    y = x + attention(x, kv, store, prefix, cfg)
    ff = _linear(store, f"{prefix}.ff0", y).elu()
    ff = _linear(store, f"{prefix}.ff1", ff)
    return y + ff


def multiplex_transform(
    ref: TokenSet, tgt: TokenSet, store: ParamStore, cfg: ModelConfig
) -> tuple[Tensor, Tensor]:
    """N rounds of self-attention per side followed by simultaneous
    cross-attention in both directions; returns the aggregated reference
    and target token matrices."""
    x_ref, x_tgt = ref.tokens, tgt.tokens
    if x_ref.data.shape[1] != cfg.channels or x_tgt.data.shape[1] != cfg.channels:
        raise ShapeMismatch("token width must equal config channels")
    for r in range(cfg.transformer_depth):
        x_ref = _sublayer(x_ref, x_ref, store, f"tr{r}.self", cfg)
        x_tgt = _sublayer(x_tgt, x_tgt, store, f"tr{r}.self", cfg)
        new_ref = _sublayer(x_ref, x_tgt, store, f"tr{r}.cross", cfg)
        new_tgt = _sublayer(x_tgt, x_ref, store, f"tr{r}.cross", cfg)
        x_ref, x_tgt = new_ref, new_tgt
    return x_ref, x_tgt
