"""Flat binary checkpoints.

Layout, all integers little-endian::

    b"UNSG"  u32 version  u32 tensor_count
    per tensor:
        u32 name_length  name (utf-8)
        u32 ndim  u64 * ndim shape
        float64 * prod(shape) values (little-endian, row-major)
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"UNSG"
VERSION = 1


def dumps(tensors: dict) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def loads(data: bytes) -> dict:
    if data[:4] != MAGIC:
        raise ValueError("not a checkpoint: bad magic")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 12
    tensors = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).astype(float)
        pos += 8 * size
    if pos != len(data):
        raise ValueError("trailing bytes after last tensor")
    return tensors


def save(path, tensors: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(tensors))


def load(path) -> dict:
    with open(path, "rb") as fh:
        return loads(fh.read())
