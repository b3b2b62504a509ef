"""Shared containers and validity checks.

Pixel coordinates are ``(row, col)`` with the origin at the top-left corner.
Arrays are held as numpy arrays; the dataclasses below only bundle them with
the metadata the other modules need and mark them read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

# 4-neighbourhood structuring element
FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class InvariantError(RuntimeError):
    """An internal invariant was violated (a bug, not bad input)."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def as_tensor(data, dtype=np.float64) -> np.ndarray:
    """Return ``data`` as a rank-3 (channels, rows, cols) finite array.

    Rank-2 input is promoted to a single channel.
    """
    a = np.asarray(data, dtype=dtype)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise ValueError(f"expected a rank-3 tensor, got rank {a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor contains non-finite values")
    return a


@dataclass(frozen=True)
class SuperpixelMap:
    """Per-pixel superpixel ids.

    Construction does not validate; use :func:`validate_partition` or
    :meth:`checked` when the map comes from outside.
    """

    ids: np.ndarray
    count: int

    def __post_init__(self):
        ids = np.asarray(self.ids)
        if ids.ndim != 2:
            raise ValueError("superpixel ids must be a 2-D array")
        object.__setattr__(self, "ids", _frozen(ids, np.int64))
        object.__setattr__(self, "count", int(self.count))

    @property
    def shape(self) -> tuple[int, int]:
        return self.ids.shape

    @classmethod
    def from_ids(cls, ids) -> "SuperpixelMap":
        ids = np.asarray(ids)
        return cls(ids, int(ids.max()) + 1 if ids.size else 0)

    def checked(self) -> "SuperpixelMap":
        ok, problems = validate_partition(self)
        if not ok:
            raise ValueError(f"invalid superpixel map: {problems[0]}")
        return self

    def sizes(self) -> np.ndarray:
        return np.bincount(self.ids.ravel(), minlength=self.count)


@dataclass(frozen=True)
class SuperpixelFeatures:
    """Pooled feature vectors with centroids and pixel counts.

    ``shape`` is the (rows, cols) of the image the superpixels live on;
    it is needed to normalise distances by the image diagonal.
    """

    features: np.ndarray  # (count, dim)
    positions: np.ndarray  # (count, 2) centroid (row, col)
    sizes: np.ndarray  # (count,)
    shape: tuple[int, int]

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        object.__setattr__(self, "features", _frozen(feats, np.float64))
        object.__setattr__(self, "positions", _frozen(self.positions, np.float64))
        object.__setattr__(self, "sizes", _frozen(self.sizes, np.int64))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        n = len(feats)
        if self.positions.shape != (n, 2) or self.sizes.shape != (n,):
            raise ValueError("features, positions and sizes disagree on count")

    @property
    def count(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def diagonal(self) -> float:
        return float(np.hypot(*self.shape))


@dataclass(frozen=True)
class LabelMap:
    labels: np.ndarray
    num_labels: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError("label map must be 2-D")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_labels):
            raise ValueError(
                f"labels must lie in [0, {self.num_labels}), "
                f"found range [{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "labels", _frozen(labels, np.int64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class Instance:
    mask: np.ndarray
    class_id: int
    score: float = 1.0

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise ValueError("instance mask must be 2-D")
        if not mask.any():
            raise ValueError("instance mask is empty")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        object.__setattr__(self, "mask", _frozen(mask, bool))


@dataclass(frozen=True)
class InstanceSet:
    instances: tuple[Instance, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        shapes = {inst.mask.shape for inst in self.instances}
        if len(shapes) > 1:
            raise ValueError(f"instance masks disagree on shape: {sorted(shapes)}")

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)


def validate_partition(sp: SuperpixelMap) -> tuple[bool, list[str]]:
    """Check that ``sp`` is a total partition into connected, contiguous ids.

    Never raises on a malformed map; returns ``(ok, diagnostics)`` where the
    first diagnostic names the first violated invariant.
    """
    ids = sp.ids
    problems = []
    if ids.size == 0:
        return False, ["empty map"]
    if ids.min() < 0:
        problems.append(f"negative id {int(ids.min())}")
        return False, problems
    if ids.max() >= sp.count:
        problems.append(f"id {int(ids.max())} exceeds declared count {sp.count}")
    sizes = np.bincount(ids.ravel(), minlength=sp.count)
    for i in np.flatnonzero(sizes[: sp.count] == 0):
        problems.append(f"id {i} empty")
    if problems:
        return False, problems

    # ndimage.find_objects gives per-id bounding boxes, so each connectivity
    # check only touches a small window
    for i, box in enumerate(ndimage.find_objects(ids + 1)):
        if box is None:
            continue
        _, ncomp = ndimage.label(ids[box] == i, structure=FOUR_CONNECTED)
        if ncomp != 1:
            problems.append(f"id {i} disconnected ({ncomp} components)")
    return not problems, problems


def broadcast_labels(sp: SuperpixelMap, labels, num_labels: int) -> LabelMap:
    """Fill every superpixel with the label of its variable."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (sp.count,):
        raise ValueError(f"need {sp.count} labels, got {labels.shape}")
    return LabelMap(labels[sp.ids], num_labels)
