"""Binary checkpoint format for named float64 parameter arrays.

Layout (all integers little-endian)::

    b"CLTM"                 magic
    u8   version (=1)
    u32  array count
    per array, in declared order:
        u16  name length, name bytes (utf-8)
        u8   ndim
        u32  dims[ndim]
    raw float64 values of every array, in the same order, C order
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import IngestError

MAGIC = b"CLTM"
VERSION = 1


def dumps(arrays: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<BI", VERSION, len(arrays))]
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
    for arr in arrays.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def loads(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise IngestError("not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<BI", data, 4)
    if version != VERSION:
        raise IngestError(f"unsupported checkpoint version {version}")
    pos = 9
    manifest = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        manifest.append((name, shape))
    out = {}
    for name, shape in manifest:
        size = int(np.prod(shape, dtype=np.int64))
        if pos + 8 * size > len(data):
            raise IngestError(f"checkpoint truncated while reading {name}")
        out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    if pos != len(data):
        raise IngestError(f"{len(data) - pos} trailing bytes after checkpoint payload")
    return out


def save(path, arrays: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(arrays))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
