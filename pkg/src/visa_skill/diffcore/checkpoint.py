"""Named-tensor checkpoint container.

Layout (all integers little-endian)::

    b"VISACKPT" | version u32 | count u32
    per tensor: name_len u16 | name utf-8 | dtype u8 (0=f32, 1=f64) | rank u8
                | extents u64 * rank | raw row-major data
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"VISACKPT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class CheckpointError(ValueError):
    pass


def dumps(tensors: Mapping[str, np.ndarray], dtype_tag: int = 1) -> bytes:
    if dtype_tag not in _DTYPES:
        raise CheckpointError(f"unknown dtype tag {dtype_tag}")
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<BB", dtype_tag, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[dtype_tag]).tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:8] != MAGIC:
        raise CheckpointError("bad magic; not a checkpoint")
    version, count = struct.unpack_from("<II", buf, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 16
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            tag, rank = struct.unpack_from("<BB", buf, pos)
            pos += 2
            shape = struct.unpack_from(f"<{rank}Q", buf, pos)
            pos += 8 * rank
            dt = _DTYPES[tag]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
            if pos + nbytes > len(buf):
                raise CheckpointError(f"truncated data for {name!r}")
            arr = np.frombuffer(buf, dtype=dt, count=nbytes // dt.itemsize, offset=pos)
            pos += nbytes
            if name in out:
                raise CheckpointError(f"duplicate tensor name {name!r}")
            out[name] = arr.reshape(shape).astype(np.float64)
    except (struct.error, KeyError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    return out


def save(path, tensors: Mapping[str, np.ndarray], dtype_tag: int = 1) -> None:
    Path(path).write_bytes(dumps(tensors, dtype_tag))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
