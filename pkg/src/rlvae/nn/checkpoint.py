"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic   b"RLVAECKP"
    u32     format version
    u32     metadata length, then UTF-8 JSON metadata (RNG state, step, config)
    u32     tensor count
    per tensor:
        u32 name length, UTF-8 name
        u32 rank, rank x u32 dims
        float32 payload (row-major, little-endian)

Round trips are bit-exact.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RLVAECKP"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    meta_bytes = json.dumps(meta or {}, sort_keys=True, separators=(",", ":")).encode()
    buf.write(struct.pack("<I", len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        nb = name.encode()
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        arr = np.ascontiguousarray(arr, dtype="<f4")
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def loads(data: bytes) -> tuple[dict[str, np.ndarray], dict]:
    view = memoryview(data)
    if bytes(view[:8]) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    pos = 8

    def u32() -> int:
        nonlocal pos
        (v,) = struct.unpack_from("<I", view, pos)
        pos += 4
        return v

    version = u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    n_meta = u32()
    meta = json.loads(bytes(view[pos : pos + n_meta]).decode())
    pos += n_meta
    tensors = {}
    for _ in range(u32()):
        n_name = u32()
        name = bytes(view[pos : pos + n_name]).decode()
        pos += n_name
        rank = u32()
        shape = tuple(u32() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(view, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
        tensors[name] = arr.astype(np.float32)
    if pos != len(view):
        raise CheckpointError("trailing bytes in checkpoint")
    return tensors, meta


def save(path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(tensors, meta))


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
