"""On-disk formats.

TensorFile (``.spt``)::

    offset  size      field
    0       4         magic b"SPT1"
    4       1         dtype code (1 = float32, 2 = uint32)
    5       1         rank
    6       2         zero padding
    8       8 * rank  dims, uint64 little-endian
    ...               payload, row-major little-endian

Images are 8-bit RGB PNG, label maps 8- or 16-bit greyscale PNG. Edge lists,
instance sets, configs and metric reports are JSON.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .core import Instance, InstanceSet, LabelMap
from .simgraph import EdgeList

MAGIC = b"SPT1"
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<u4")}
CODES = {np.dtype("<f4"): 1, np.dtype("<u4"): 2}
HEADER = struct.Struct("<4sBB2x")


class FormatError(ValueError):
    """A file did not match its declared format."""


def encode_tensor(tensor) -> bytes:
    a = np.asarray(tensor)
    if a.dtype.kind == "f":
        if a.dtype != np.float32 and not np.all(np.isfinite(a)):
            raise ValueError("tensor contains non-finite values")
        a = a.astype("<f4")
    elif a.dtype.kind in "ui":
        if a.size and (a.min() < 0 or a.max() > np.iinfo(np.uint32).max):
            raise ValueError("integer tensor does not fit uint32")
        a = a.astype("<u4")
    else:
        raise ValueError(f"unsupported dtype {a.dtype}")
    if a.ndim > 255:
        raise ValueError("rank too large")
    dims = struct.pack(f"<{a.ndim}Q", *a.shape)
    return HEADER.pack(MAGIC, CODES[a.dtype], a.ndim) + dims + np.ascontiguousarray(a).tobytes()


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < HEADER.size or data[:4] != MAGIC:
        raise FormatError("bad magic")
    _, code, rank = HEADER.unpack_from(data)
    if code not in DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    if data[6:8] != b"\x00\x00":
        raise FormatError("nonzero header padding")
    end = HEADER.size + 8 * rank
    if len(data) < end:
        raise FormatError("truncated header")
    dims = struct.unpack_from(f"<{rank}Q", data, HEADER.size)
    dtype = DTYPES[code]
    expected = int(np.prod(dims, dtype=object)) * dtype.itemsize
    payload = len(data) - end
    if payload < expected:
        raise FormatError(f"truncated payload: {payload} bytes, dims need {expected}")
    if payload > expected:
        raise FormatError(f"trailing bytes: {payload} bytes, dims need {expected}")
    return np.frombuffer(data, dtype=dtype, offset=end).reshape(dims).copy()


def write_tensor(path, tensor) -> None:
    Path(path).write_bytes(encode_tensor(tensor))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def read_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_image(path, rgb) -> None:
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8 or rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected a uint8 (rows, cols, 3) image")
    Image.fromarray(rgb).save(path, format="PNG")


def write_label_map(path, labels) -> None:
    labels = np.asarray(getattr(labels, "labels", labels))
    if labels.size and (labels.min() < 0 or labels.max() > 65535):
        raise ValueError("labels must fit in 16 bits")
    if labels.size == 0 or labels.max() < 256:
        Image.fromarray(labels.astype(np.uint8)).save(path, format="PNG")
    else:
        Image.fromarray(labels.astype(np.uint16)).save(path, format="PNG")


def read_label_map(path, num_labels: int | None = None):
    with Image.open(path) as im:
        if im.mode not in ("L", "I;16", "I", "P"):
            raise FormatError(f"label map must be single-channel, got mode {im.mode}")
        labels = np.asarray(im).astype(np.int64)
    if num_labels is None:
        return labels
    return LabelMap(labels, num_labels)


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc


def edges_to_dict(edges: EdgeList) -> dict:
    return {
        "kind": edges.kind,
        "edges": [[int(i), int(j), float(w)] for (i, j), w in zip(edges.edges, edges.weights)],
    }


def edges_from_dict(doc: dict) -> EdgeList:
    try:
        rows = doc["edges"]
        edges = [(int(r[0]), int(r[1])) for r in rows]
        weights = [float(r[2]) for r in rows]
        return EdgeList(np.array(edges).reshape(-1, 2), np.array(weights), doc.get("kind", "similarity"))
    except (KeyError, IndexError, TypeError) as exc:
        raise FormatError(f"malformed edge list: {exc}") from exc


def _rle_encode(mask: np.ndarray) -> list[int]:
    """Row-major run lengths, starting with a (possibly empty) run of zeros."""
    flat = mask.ravel().astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs = [0] + runs
    return runs


def _rle_decode(runs, shape) -> np.ndarray:
    flat = np.zeros(int(np.prod(shape)), dtype=bool)
    pos, value = 0, False
    for r in runs:
        flat[pos:pos + r] = value
        pos += r
        value = not value
    if pos != flat.size:
        raise FormatError(f"run lengths cover {pos} pixels, mask has {flat.size}")
    return flat.reshape(shape)


def instances_to_dict(instances: InstanceSet) -> dict:
    shape = instances.instances[0].mask.shape if len(instances) else (0, 0)
    return {
        "shape": list(shape),
        "instances": [
            {"class_id": int(i.class_id), "score": float(i.score), "rle": _rle_encode(i.mask)}
            for i in instances
        ],
    }


def instances_from_dict(doc: dict) -> InstanceSet:
    try:
        shape = tuple(int(s) for s in doc["shape"])
        return InstanceSet([
            Instance(_rle_decode(d["rle"], shape), int(d["class_id"]), float(d.get("score", 1.0)))
            for d in doc["instances"]
        ])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed instance set: {exc}") from exc
