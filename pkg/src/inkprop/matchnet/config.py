"""Model configuration.

Paper-scale constants are the documented defaults; ``desk()`` is the
reduced profile the test suite trains and checks (CPU-sized, same
architecture)."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 128          # C: token/feature width
    transformer_depth: int = 9   # N rounds of self+cross attention
    heads: int = 4
    kernel: int = 3

    # offset-estimation U-Net (3 downsamples, bottleneck 128)
    offset_channels: tuple[int, ...] = (32, 64, 96)
    offset_bottleneck: int = 128

    # feature-extraction U-Net (4 downsamples, bottleneck 512)
    feature_channels: tuple[int, ...] = (64, 128, 256, 384)
    feature_bottleneck: int = 512

    embed_channels: int = 32     # line/color embeddings entering the U-Net
    semantic_hw: int = 40
    semantic_channels: int = 16  # builtin descriptor depth
    bbox_hidden: int = 64        # positional-embedding MLP hidden width
    match_threshold: float = 0.2

    # block-matching flow parameters
    flow_block: int = 16
    flow_radius: int = 24

    def __post_init__(self):
        if self.channels % self.heads:
            raise ValueError("channels must divide evenly into heads")

    @property
    def ff_hidden(self) -> int:
        return 2 * self.channels

    @property
    def offset_downs(self) -> int:
        return len(self.offset_channels)

    @property
    def feature_downs(self) -> int:
        return len(self.feature_channels)

    @classmethod
    def desk(cls) -> "ModelConfig":
        """CPU-scale profile for tests and toy experiments (images
        <= 128x128)."""
        return cls(
            channels=32,
            transformer_depth=3,
            heads=4,
            offset_channels=(8, 16, 32),
            offset_bottleneck=64,
            feature_channels=(16, 24, 32, 48),
            feature_bottleneck=128,
            embed_channels=8,
            flow_block=8,
            flow_radius=8,
        )

    @classmethod
    def tiny(cls) -> "ModelConfig":
        """Minimal profile for finite-difference sweeps of the whole
        pipeline."""
        return cls(
            channels=8,
            transformer_depth=1,
            heads=2,
            offset_channels=(4,),
            offset_bottleneck=8,
            feature_channels=(4, 8),
            feature_bottleneck=16,
            embed_channels=4,
            semantic_channels=16,
            bbox_hidden=8,
            flow_block=8,
            flow_radius=4,
        )

    def to_json(self) -> dict:
        return {
            "channels": self.channels,
            "transformer_depth": self.transformer_depth,
            "heads": self.heads,
            "kernel": self.kernel,
            "offset_channels": list(self.offset_channels),
            "offset_bottleneck": self.offset_bottleneck,
            "feature_channels": list(self.feature_channels),
            "feature_bottleneck": self.feature_bottleneck,
            "embed_channels": self.embed_channels,
            "semantic_hw": self.semantic_hw,
            "semantic_channels": self.semantic_channels,
            "bbox_hidden": self.bbox_hidden,
            "match_threshold": self.match_threshold,
            "flow_block": self.flow_block,
            "flow_radius": self.flow_radius,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ModelConfig":
        kwargs = dict(data)
        for key in ("offset_channels", "feature_channels"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)
