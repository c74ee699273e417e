"""Versioned binary snapshot of a :class:`SceneModel`.

Layout (little endian), documented further in ``docs/snapshot_format.md``::

    magic        4s   b"BGSM"
    version      u16  1
    flags        u16  bit 0: background labels follow the node records
    block_size   u32
    width        u32
    height       u32
    rows         u32
    cols         u32
    frames       u64  frames ingested so far
    fps          f64
    t1, t2       f64, f64
    q31_mean     f64
    q31_std      f64
    per node, row-major:
        count    u32
        per representative: weight u64, variance f64, mean f64[N*N]
    if flags & 1:
        labels   i32[rows*cols]   chosen representative, -1 when empty
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import SnapshotError, WriteError
from .frame_io import NodeGrid
from .repset import NoiseThresholds, SceneModel, _centred_norm

MAGIC = b"BGSM"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIIIIQddddd")
_FLAG_LABELS = 1


def dumps(model: SceneModel, labels=None) -> bytes:
    grid, th = model.grid, model.thresholds
    flags = _FLAG_LABELS if labels is not None else 0
    parts = [_HEADER.pack(MAGIC, VERSION, flags, grid.block_size, grid.width, grid.height,
                          grid.rows, grid.cols, model.frames_ingested, model.fps,
                          th.t1, th.t2, th.q31_mean, th.q31_std)]
    record = np.dtype([("weight", "<u8"), ("variance", "<f8"), ("mean", "<f8", (grid.dim,))])
    for k in range(grid.node_count):
        count = int(model.counts[k])
        parts.append(struct.pack("<I", count))
        recs = np.empty(count, dtype=record)
        recs["weight"] = model.weights[k, :count]
        recs["variance"] = model.variances[k, :count]
        recs["mean"] = model.means[k, :count]
        parts.append(recs.tobytes())
    if labels is not None:
        labels = np.asarray(labels, dtype="<i4").ravel()
        if labels.size != grid.node_count:
            raise ValueError("label grid does not match the model grid")
        parts.append(labels.tobytes())
    return b"".join(parts)


def loads(data: bytes) -> tuple[SceneModel, np.ndarray | None]:
    """Rebuild a model (and labels, when stored) from :func:`dumps` output."""
    if len(data) < _HEADER.size:
        raise SnapshotError("snapshot is truncated")
    (magic, version, flags, block_size, width, height, rows, cols, frames, fps,
     t1, t2, q_mean, q_std) = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"not a scene-model snapshot (magic {magic!r})")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    grid = NodeGrid(block_size, width, height)
    if (grid.rows, grid.cols) != (rows, cols):
        raise SnapshotError("snapshot grid dimensions are inconsistent")
    model = SceneModel(grid, NoiseThresholds(t1=t1, t2=t2, q31_mean=q_mean, q31_std=q_std),
                       fps=fps)
    record = np.dtype([("weight", "<u8"), ("variance", "<f8"), ("mean", "<f8", (grid.dim,))])
    pos = _HEADER.size
    nodes = []
    try:
        for _ in range(grid.node_count):
            (count,) = struct.unpack_from("<I", data, pos)
            pos += 4
            recs = np.frombuffer(data, dtype=record, count=count, offset=pos)
            pos += count * record.itemsize
            nodes.append(recs)
        labels = None
        if flags & _FLAG_LABELS:
            labels = np.frombuffer(data, dtype="<i4", count=grid.node_count, offset=pos)
            labels = labels.astype(np.int64).reshape(grid.shape)
            pos += 4 * grid.node_count
    except (struct.error, ValueError):
        raise SnapshotError("snapshot is truncated") from None
    if pos != len(data):
        raise SnapshotError(f"{len(data) - pos} trailing bytes after snapshot")
    model._ensure_capacity(max((len(r) for r in nodes), default=1))
    for k, recs in enumerate(nodes):
        count = len(recs)
        model.counts[k] = count
        model.weights[k, :count] = recs["weight"]
        model.variances[k, :count] = recs["variance"]
        model.means[k, :count] = recs["mean"]
        model._norms[k, :count] = _centred_norm(recs["mean"]) if count else 0.0
    model.frames_ingested = frames
    model._track_memory()
    return model, labels


def save_model(model: SceneModel, path, labels=None) -> None:
    try:
        Path(path).write_bytes(dumps(model, labels))
    except OSError as exc:
        raise WriteError(f"{path}: {exc.strerror or exc}") from exc


def load_model(path) -> tuple[SceneModel, np.ndarray | None]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotError(f"{path}: {exc.strerror or exc}") from exc
    return loads(data)
