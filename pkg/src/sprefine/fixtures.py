"""Synthetic parsing fixtures and label colouring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# background plus six parts; well separated in CIELAB
BASE_COLORS = np.array([
    [40, 40, 40],
    [230, 60, 50],
    [60, 200, 70],
    [50, 90, 230],
    [240, 220, 60],
    [200, 70, 210],
    [70, 210, 220],
    [250, 150, 40],
    [150, 100, 60],
    [245, 245, 245],
], dtype=np.uint8)


@dataclass
class Fixture:
    image: np.ndarray  # (rows, cols, 3) uint8
    gt: np.ndarray  # (rows, cols) int64
    unary: np.ndarray  # (L, rows, cols) float32, sums to 1 per pixel
    num_labels: int


def voc_palette(n: int = 256) -> np.ndarray:
    """The usual bit-interleaved VOC colour map (injective over 256 labels)."""
    pal = np.zeros((n, 3), dtype=np.uint8)
    for i in range(n):
        c, r, g, b = i, 0, 0, 0
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        pal[i] = (r, g, b)
    return pal


def colorize(labels, palette=None) -> np.ndarray:
    labels = np.asarray(getattr(labels, "labels", labels))
    palette = voc_palette() if palette is None else np.asarray(palette, dtype=np.uint8)
    if labels.size and labels.max() >= len(palette):
        raise ValueError(f"label {labels.max()} has no palette entry ({len(palette)} colours)")
    if labels.size and labels.min() < 0:
        raise ValueError("negative label")
    return palette[labels]


def _part_color(label, rng):
    base = BASE_COLORS[label % len(BASE_COLORS)].astype(np.int64)
    return np.clip(base + rng.integers(-15, 16, 3), 0, 255)


def _draw_parts(rows, cols, num_labels, rng):
    gt = np.zeros((rows, cols), dtype=np.int64)
    rr, cc = np.mgrid[0:rows, 0:cols]
    for label in range(1, num_labels):
        cy, cx = rng.uniform(0.15, 0.85) * rows, rng.uniform(0.15, 0.85) * cols
        ry, rx = rng.uniform(0.08, 0.22) * rows, rng.uniform(0.08, 0.22) * cols
        if rng.random() < 0.5:
            region = ((rr - cy) / ry) ** 2 + ((cc - cx) / rx) ** 2 <= 1.0
        else:
            region = (np.abs(rr - cy) <= ry) & (np.abs(cc - cx) <= rx)
        gt[region] = label
    return gt


def correlated_noise(shape, rng, correlation: float) -> np.ndarray:
    """Gaussian white noise blurred by ``correlation`` pixels, rescaled to unit std per channel."""
    n = rng.standard_normal(shape)
    if correlation > 0:
        n = ndimage.gaussian_filter(n, sigma=(0,) + (correlation,) * (len(shape) - 1), mode="reflect")
    sd = n.std(axis=tuple(range(1, n.ndim)), keepdims=True)
    sd[sd == 0] = 1.0
    return n / sd


def generate_fixture(seed: int, size=64, num_labels: int = 7, noise: float = 0.5,
                     correlation: float = 2.0, image_noise: float = 4.0) -> Fixture:
    """Render background plus ``num_labels - 1`` coloured parts with a noisy unary.

    The unary is ``(1 - noise) * onehot(gt) + noise * softmax(2 * n)`` where
    ``n`` is spatially correlated Gaussian noise, so ``noise=0`` gives an
    exact one-hot unary. ``image_noise`` is the std (in 8-bit levels) of the
    pixel noise added to the rendered image.
    """
    if num_labels < 2:
        raise ValueError("need at least two labels")
    if not 0 <= noise <= 1:
        raise ValueError("noise must lie in [0, 1]")
    rows, cols = (size, size) if np.isscalar(size) else size
    rng = np.random.default_rng(seed)

    gt = _draw_parts(rows, cols, num_labels, rng)
    colors = np.stack([_part_color(l, rng) for l in range(num_labels)])
    image = colors[gt].astype(np.float64)
    if image_noise > 0:
        image += rng.normal(0.0, image_noise, image.shape)
    image = np.clip(np.round(image), 0, 255).astype(np.uint8)

    onehot = (np.arange(num_labels)[:, None, None] == gt[None]).astype(np.float64)
    n = correlated_noise((num_labels, rows, cols), rng, correlation)
    q = np.exp(2.0 * n)
    q /= q.sum(axis=0, keepdims=True)
    unary = (1 - noise) * onehot + noise * q
    unary /= unary.sum(axis=0, keepdims=True)
    return Fixture(image, gt, unary.astype(np.float32), num_labels)
