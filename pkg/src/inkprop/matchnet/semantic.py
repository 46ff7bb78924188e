"""Semantic line descriptors.

The matcher needs a coarse what-is-where signal to survive large
deformations. The builtin provider is a classical stand-in for a
pretrained image encoder: the line raster is resized to 320x320 with
min-pooling, and every 8x8 cell accumulates an 8-orientation x 2-scale
histogram of local line directions, giving a 16-channel 40x40 grid,
standardized per channel. Precomputed grids (e.g. from an external
encoder) load from a checkpoint-format file instead.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..augment import minpool_resize
from ..errors import MalformedFeatureFile
from ..raster import LineArtRaster
from ..autodiff.params import load_params

_N_BINS = 8
_SCALES = (1, 2)
_GRID = 40
_CELL = 8  # 320 / 40


def _ring_offsets(radius: int) -> list[tuple[int, int]]:
    return [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if max(abs(dy), abs(dx)) == radius
    ]


def _orientation_bin(dy: int, dx: int) -> int:
    theta = np.arctan2(dy, dx) % np.pi
    return int(theta / (np.pi / _N_BINS)) % _N_BINS


def builtin_descriptor(lines: LineArtRaster) -> np.ndarray:
    """16-channel 40x40 line-direction density grid, standardized."""
    grid = raw_descriptor_counts(lines)
    # standardize per channel; silent channels stay zero
    mean = grid.mean(axis=(1, 2), keepdims=True)
    std = grid.std(axis=(1, 2), keepdims=True)
    return np.where(std > 0, (grid - mean) / np.where(std > 0, std, 1.0), 0.0)


def load_external_descriptor(path: str | Path, expected_hw: int = _GRID) -> np.ndarray:
    """A precomputed [C, 40, 40] grid from the checkpoint container (tensor
    name "semantic")."""
    try:
        store, _ = load_params(path)
    except Exception as exc:
        raise MalformedFeatureFile(f"{path}: {exc}") from exc
    if "semantic" not in store:
        raise MalformedFeatureFile(f"{path}: no 'semantic' tensor")
    grid = store["semantic"].data
    if grid.ndim != 3 or grid.shape[1:] != (expected_hw, expected_hw):
        raise MalformedFeatureFile(
            f"{path}: expected [C,{expected_hw},{expected_hw}], got {grid.shape}"
        )
    if not np.isfinite(grid).all():
        raise MalformedFeatureFile(f"{path}: non-finite values")
    return grid


def semantic_descriptor(
    lines: LineArtRaster, provider: str = "builtin", path: str | Path | None = None
) -> np.ndarray:
    """Dispatch between the builtin histogram grid and an external file."""
    if provider == "builtin":
        return builtin_descriptor(lines)
    if provider == "external":
        if path is None:
            raise ValueError("external provider needs a path")
        return load_external_descriptor(path)
    raise ValueError(f"unknown semantic provider {provider!r}")


def raw_descriptor_counts(lines: LineArtRaster) -> np.ndarray:
    """Pre-standardization densities (exposed for the oracle tests)."""
    resized = minpool_resize(lines, _GRID * _CELL, _GRID * _CELL)
    mask = resized.classes != 0
    grid = np.zeros((len(_SCALES) * _N_BINS, _GRID, _GRID), dtype=np.float64)
    for si, radius in enumerate(_SCALES):
        for dy, dx in _ring_offsets(radius):
            h, w = mask.shape
            a = np.zeros_like(mask)
            ys0, ys1 = max(0, -dy), min(h, h - dy)
            xs0, xs1 = max(0, -dx), min(w, w - dx)
            a[ys0:ys1, xs0:xs1] = mask[ys0:ys1, xs0:xs1] & mask[
                ys0 + dy : ys1 + dy, xs0 + dx : xs1 + dx
            ]
            cells = a.reshape(_GRID, _CELL, _GRID, _CELL).sum(axis=(1, 3))
            grid[si * _N_BINS + _orientation_bin(dy, dx)] += cells
    return grid
