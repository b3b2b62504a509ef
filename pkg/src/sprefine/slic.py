"""SLIC superpixels: grid-seeded local k-means over CIELAB colour and position."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.color import rgb2lab

from .core import FOUR_CONNECTED, SuperpixelMap


@dataclass(frozen=True)
class SlicParams:
    target_count: int
    compactness: float = 10.0
    iterations: int = 10

    def __post_init__(self):
        if self.target_count < 1:
            raise ValueError("target_count must be positive")
        if self.compactness <= 0:
            raise ValueError("compactness must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")


def _to_lab(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim == 2:
        image = np.stack([image] * 3, axis=-1)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an RGB image (rows, cols, 3), got {image.shape}")
    if image.dtype == np.uint8:
        rgb = image.astype(np.float64) / 255.0
    else:
        rgb = np.clip(image.astype(np.float64), 0.0, 1.0)
    return rgb2lab(rgb)


def _grid_shape(rows: int, cols: int, k: int) -> tuple[int, int]:
    ny = int(np.floor(np.sqrt(k * rows / cols) + 0.5))
    ny = min(max(ny, 1), rows)
    nx = int(np.floor(k / ny + 0.5))
    nx = min(max(nx, 1), cols)
    return ny, nx


def _gradient(lab: np.ndarray) -> np.ndarray:
    padded = np.pad(lab, ((1, 1), (1, 1), (0, 0)), mode="edge")
    dy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    dx = padded[1:-1, 2:] - padded[1:-1, :-2]
    return (dy ** 2).sum(-1) + (dx ** 2).sum(-1)


def _seed_centers(lab, ny, nx):
    rows, cols = lab.shape[:2]
    grad = _gradient(lab)
    cy = (np.arange(ny) + 0.5) * rows / ny - 0.5
    cx = (np.arange(nx) + 0.5) * cols / nx - 0.5
    centers = []
    for y in cy:
        for x in cx:
            r0, c0 = int(round(y)), int(round(x))
            best, pos = grad[r0, c0], (y, x)
            # move only to a strictly lower-gradient neighbour, first in scan order
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    r, c = r0 + dr, c0 + dc
                    if 0 <= r < rows and 0 <= c < cols and grad[r, c] < best:
                        best, pos = grad[r, c], (float(r), float(c))
            r, c = int(round(pos[0])), int(round(pos[1]))
            centers.append([*lab[r, c], pos[0], pos[1]])
    return np.array(centers, dtype=np.float64)


def slic_segment(image, params: SlicParams, mask=None) -> SuperpixelMap:
    """Segment an RGB image into connected superpixels.

    Parameters
    ----------
    image : ndarray (rows, cols, 3)
        ``uint8`` or float in [0, 1]. A 2-D array is treated as grey.
    params : SlicParams
    mask : ndarray of bool, optional
        When given, superpixels are clipped to the mask and its complement
        (see :func:`intersect_with_mask`).

    Returns
    -------
    SuperpixelMap
        Contiguous ids, each a single 4-connected region.
    """
    lab = _to_lab(image)
    rows, cols = lab.shape[:2]
    if rows * cols == 0:
        raise ValueError("image is empty")
    k = params.target_count
    if k > rows * cols:
        raise ValueError(f"target_count {k} exceeds pixel count {rows * cols}")

    step = np.sqrt(rows * cols / k)
    ny, nx = _grid_shape(rows, cols, k)
    centers = _seed_centers(lab, ny, nx)
    # search radius per axis; at least the grid pitch so the windows tile the image
    rad_y = max(step, rows / ny)
    rad_x = max(step, cols / nx)
    spatial = (params.compactness / step) ** 2

    rr, cc = np.mgrid[0:rows, 0:cols].astype(np.float64)
    labels = np.full((rows, cols), -1, dtype=np.int64)
    for _ in range(params.iterations):
        dist = np.full((rows, cols), np.inf)
        labels.fill(-1)
        for idx, (l, a, b, y, x) in enumerate(centers):
            r0, r1 = max(int(np.ceil(y - rad_y)), 0), min(int(np.floor(y + rad_y)) + 1, rows)
            c0, c1 = max(int(np.ceil(x - rad_x)), 0), min(int(np.floor(x + rad_x)) + 1, cols)
            if r0 >= r1 or c0 >= c1:
                continue
            win = lab[r0:r1, c0:c1]
            d = ((win[..., 0] - l) ** 2 + (win[..., 1] - a) ** 2 + (win[..., 2] - b) ** 2
                 + spatial * ((rr[r0:r1, c0:c1] - y) ** 2 + (cc[r0:r1, c0:c1] - x) ** 2))
            # strict < keeps ties with the lower cluster index
            better = d < dist[r0:r1, c0:c1]
            dist[r0:r1, c0:c1][better] = d[better]
            labels[r0:r1, c0:c1][better] = idx
        orphans = labels < 0
        if orphans.any():
            labels[orphans] = _nearest_center(lab[orphans], rr[orphans], cc[orphans],
                                              centers, spatial)
        centers = _update_centers(lab, rr, cc, labels, centers)

    sp = enforce_connectivity(labels, target_count=k, max_extent=4 * step)
    if mask is not None:
        sp = intersect_with_mask(sp, mask)
    return sp


def _nearest_center(lab_px, r, c, centers, spatial):
    d = ((lab_px[:, None, :] - centers[None, :, :3]) ** 2).sum(-1)
    d += spatial * ((r[:, None] - centers[None, :, 3]) ** 2 + (c[:, None] - centers[None, :, 4]) ** 2)
    return np.argmin(d, axis=1)


def _update_centers(lab, rr, cc, labels, centers):
    n = len(centers)
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=n).astype(np.float64)
    new = centers.copy()
    occupied = counts > 0
    for ch in range(3):
        sums = np.bincount(flat, weights=lab[..., ch].ravel(), minlength=n)
        new[occupied, ch] = sums[occupied] / counts[occupied]
    for ch, coord in ((3, rr), (4, cc)):
        sums = np.bincount(flat, weights=coord.ravel(), minlength=n)
        new[occupied, ch] = sums[occupied] / counts[occupied]
    return new


def relabel_sequential(ids) -> np.ndarray:
    """Map ids to 0..n-1 in order of first appearance in raster scan."""
    ids = np.asarray(ids)
    _, first, inverse = np.unique(ids.ravel(), return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return rank[inverse].reshape(ids.shape)


def _components(ids):
    """Split every id into its 4-connected components, numbered in scan order."""
    comp = np.zeros(ids.shape, dtype=np.int64)
    offset = 0
    for value in np.unique(ids):
        lab, n = ndimage.label(ids == value, structure=FOUR_CONNECTED)
        hit = lab > 0
        comp[hit] = lab[hit] + offset - 1
        offset += n
    return relabel_sequential(comp)


def enforce_connectivity(raw_ids, target_count: int | None = None,
                         min_size: float | None = None,
                         max_extent: float | None = None) -> SuperpixelMap:
    """Turn a raw cluster map into connected, contiguously numbered superpixels.

    Every 4-connected component of a raw id becomes its own superpixel.
    Components smaller than ``min_size`` (default ``(rows*cols/target_count)/4``,
    with ``target_count`` defaulting to the number of distinct raw ids) are
    merged into their largest adjacent component. Smaller fragments merge
    first; size ties go to the earlier component in scan order.

    With ``max_extent`` set, a merge is only allowed if the merged bounding
    box stays within ``max_extent`` pixels on both axes; a fragment with no
    such neighbour is kept as a superpixel of its own.
    """
    raw = np.asarray(raw_ids)
    if raw.ndim != 2 or raw.size == 0:
        raise ValueError("raw ids must be a non-empty 2-D array")
    if min_size is None:
        k = target_count if target_count is not None else len(np.unique(raw))
        min_size = raw.size / k / 4.0

    comp = _components(raw)
    n = int(comp.max()) + 1
    sizes = np.bincount(comp.ravel(), minlength=n)
    if n == 1 or sizes.min() >= min_size:
        return SuperpixelMap(comp, n)

    # adjacency between components (4-neighbourhood)
    pairs = np.concatenate([
        np.stack([comp[:, :-1].ravel(), comp[:, 1:].ravel()], 1),
        np.stack([comp[:-1, :].ravel(), comp[1:, :].ravel()], 1),
    ])
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    neighbours = [set() for _ in range(n)]
    for a, b in pairs:
        neighbours[a].add(int(b))
        neighbours[b].add(int(a))

    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    size = sizes.astype(np.int64).tolist()
    boxes = [[b[0].start, b[0].stop, b[1].start, b[1].stop]
             for b in ndimage.find_objects(comp + 1)]

    def fits(a, b):
        ba, bb = boxes[a], boxes[b]
        height = max(ba[1], bb[1]) - min(ba[0], bb[0])
        width = max(ba[3], bb[3]) - min(ba[2], bb[2])
        return height <= max_extent and width <= max_extent

    for c in sorted(range(n), key=lambda i: (sizes[i], i)):
        root = find(c)
        if size[root] >= min_size:
            continue
        adj = {find(j) for j in neighbours[root]} - {root}
        if max_extent is not None:
            adj = {j for j in adj if fits(root, j)}
        if not adj:
            continue
        target = min(adj, key=lambda j: (-size[j], j))
        parent[root] = target
        size[target] += size[root]
        bt, br = boxes[target], boxes[root]
        boxes[target] = [min(bt[0], br[0]), max(bt[1], br[1]),
                         min(bt[2], br[2]), max(bt[3], br[3])]
        neighbours[target] |= neighbours[root]

    roots = np.array([find(i) for i in range(n)])
    merged = relabel_sequential(roots[comp])
    return SuperpixelMap(merged, int(merged.max()) + 1)


def intersect_with_mask(sp: SuperpixelMap, mask) -> SuperpixelMap:
    """Clip superpixels to the regions of a mask.

    ``mask`` is boolean or a non-negative integer region map (e.g. instance
    ids). Pieces are split into connected components and renumbered; nothing
    is merged, so superpixel edges are a superset of the region boundaries.
    """
    mask = np.asarray(mask)
    if mask.shape != sp.shape:
        raise ValueError(f"mask shape {mask.shape} does not match {sp.shape}")
    regions = mask.astype(np.int64)
    if regions.min() < 0:
        raise ValueError("mask regions must be non-negative")
    comp = _components(sp.ids * (int(regions.max()) + 1) + regions)
    return SuperpixelMap(comp, int(comp.max()) + 1)
