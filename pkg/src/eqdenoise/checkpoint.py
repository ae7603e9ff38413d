"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic    8 bytes  b"EQDNCKPT"
    version  u32
    count    u32
    count x:
        name_len u32, name (utf-8), rank u32, dims u64 x rank, data float64 x prod(dims)

Optional JSON metadata (training state, epoch, config) is stored as a
tensor-like entry named ``__meta__`` of rank 1 holding the UTF-8 bytes as
float64 values, so the container stays a single uniform format.
"""

import json
import os
import struct

import numpy as np

MAGIC = b"EQDNCKPT"
VERSION = 1
META_KEY = "__meta__"


def save(path, tensors, meta=None):
    """Write ``{name: array}`` (and optional JSON-serialisable ``meta``) atomically."""
    entries = dict(tensors)
    if META_KEY in entries:
        raise ValueError(f"tensor name {META_KEY!r} is reserved")
    if meta is not None:
        raw = json.dumps(meta, sort_keys=True).encode("utf-8")
        entries[META_KEY] = np.frombuffer(raw, dtype=np.uint8).astype(np.float64)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(entries)))
        for name, arr in entries.items():
            arr = np.asarray(arr, dtype="<f8")  # tobytes() is C-order; ascontiguousarray would promote 0-d
            key = name.encode("utf-8")
            fh.write(struct.pack("<I", len(key)))
            fh.write(key)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())
    os.replace(tmp, path)


def _read(fh, n):
    b = fh.read(n)
    if len(b) != n:
        raise ValueError("checkpoint is truncated")
    return b


def load(path):
    """Return ``(tensors, meta)``; ``meta`` is ``None`` when absent."""
    with open(path, "rb") as fh:
        if _read(fh, len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a checkpoint (bad magic bytes)")
        version, count = struct.unpack("<II", _read(fh, 8))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version} (expected {VERSION})")
        tensors = {}
        for _ in range(count):
            (klen,) = struct.unpack("<I", _read(fh, 4))
            name = _read(fh, klen).decode("utf-8")
            (rank,) = struct.unpack("<I", _read(fh, 4))
            dims = struct.unpack(f"<{rank}Q", _read(fh, 8 * rank))
            size = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(_read(fh, 8 * size), dtype="<f8").astype(np.float64)
            tensors[name] = data.reshape(dims)
        if fh.read(1):
            raise ValueError("trailing bytes after the last tensor")
    meta = tensors.pop(META_KEY, None)
    if meta is not None:
        meta = json.loads(meta.astype(np.uint8).tobytes().decode("utf-8"))
    return tensors, meta
