"""Superpixel pooling of feature maps and SP-CAM aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SuperpixelFeatures, SuperpixelMap, as_tensor


@dataclass(frozen=True)
class ReceptiveFieldGrid:
    """Feature cell ``j`` along an axis is centred at ``(j + 0.5) * stride``.

    Pixel ``r`` is centred at ``r + 0.5`` in the same frame.
    """

    stride: float = 1.0

    def __post_init__(self):
        if not self.stride >= 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")

    def cells_for(self, rows: int, cols: int) -> tuple[int, int]:
        return math.ceil(rows / self.stride), math.ceil(cols / self.stride)

    def nearest_cells(self, length: int, ncells: int) -> np.ndarray:
        """Index of the nearest cell centre for every pixel along one axis.

        Equidistant pixels go to the lower cell index.
        """
        s = self.stride
        x = np.arange(length) + 0.5
        lo = np.clip(np.floor(x / s - 0.5).astype(np.int64), 0, ncells - 1)
        hi = np.minimum(lo + 1, ncells - 1)
        d_lo = np.abs(x - (lo + 0.5) * s)
        d_hi = np.abs(x - (hi + 0.5) * s)
        return np.where(d_hi < d_lo, hi, lo)


def expand_features(features, grid: ReceptiveFieldGrid, shape) -> np.ndarray:
    """Nearest-cell upsampling of a (K, M', N') map to image resolution."""
    feats = as_tensor(features)
    rows, cols = shape
    expected = grid.cells_for(rows, cols)
    if feats.shape[1:] != expected:
        raise ValueError(
            f"feature map {feats.shape[1:]} inconsistent with stride {grid.stride} "
            f"on a {rows}x{cols} image (expected {expected})"
        )
    ri = grid.nearest_cells(rows, expected[0])
    ci = grid.nearest_cells(cols, expected[1])
    return feats[:, ri[:, None], ci[None, :]]


def pool_superpixels(features, sp: SuperpixelMap,
                     grid: ReceptiveFieldGrid = ReceptiveFieldGrid()) -> SuperpixelFeatures:
    """Average the nearest-cell feature vector over each superpixel's pixels.

    A feature cell shared by several pixels of one superpixel is counted once
    per pixel, so the result is the plain per-pixel mean of the expanded map.
    """
    expanded = expand_features(features, grid, sp.shape)
    k = expanded.shape[0]
    flat_ids = sp.ids.ravel()
    sizes = np.bincount(flat_ids, minlength=sp.count)
    if sp.count == 0 or np.any(sizes == 0):
        raise ValueError("superpixel map has empty ids")
    pooled = np.empty((sp.count, k))
    for ch in range(k):
        pooled[:, ch] = np.bincount(flat_ids, weights=expanded[ch].ravel(),
                                    minlength=sp.count) / sizes
    rr, cc = np.indices(sp.shape)
    positions = np.stack([
        np.bincount(flat_ids, weights=rr.ravel(), minlength=sp.count),
        np.bincount(flat_ids, weights=cc.ravel(), minlength=sp.count),
    ], axis=1) / sizes[:, None]
    return SuperpixelFeatures(pooled, positions, sizes, sp.shape)


def global_average(spf: SuperpixelFeatures) -> np.ndarray:
    """Unweighted mean over superpixels (every superpixel counts once)."""
    if spf.count < 1:
        raise ValueError("no superpixels to average")
    return spf.features.mean(axis=0)


def sp_cam(per_scale_scores) -> np.ndarray:
    """Element-wise maximum of per-scale (superpixels, classes) score tables."""
    scores = [np.asarray(s, dtype=np.float64) for s in per_scale_scores]
    if not scores:
        raise ValueError("need at least one scale")
    shape = scores[0].shape
    if len(shape) != 2:
        raise ValueError(f"scores must be 2-D, got shape {shape}")
    for s in scores[1:]:
        if s.shape != shape:
            raise ValueError(f"shape mismatch: {s.shape} vs {shape}")
    return np.maximum.reduce(scores)
