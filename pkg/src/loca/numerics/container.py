"""Named-array container used for checkpoints and datasets.

Layout (all integers little-endian)::

    magic   b"LOCA"
    version u8
    meta    u32 length + UTF-8 JSON text
    count   u32
    repeated count times:
        name   u16 length + UTF-8
        ndim   u8
        dims   ndim x u64
        data   prod(dims) x float64 ('<f8'), row-major

Writes go to a temporary sibling file that is renamed into place, so a
reader never sees a partial file.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from ..errors import DataError

MAGIC = b"LOCA"
VERSION = 1


def encode(arrays: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<B", VERSION), struct.pack("<I", len(meta_bytes)), meta_bytes,
             struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8", order="C")
        key = name.encode()
        parts.append(struct.pack("<H", len(key)))
        parts.append(key)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if blob[:4] != MAGIC:
        raise DataError("not a container file (bad magic)")
    (version,) = struct.unpack_from("<B", blob, 4)
    if version != VERSION:
        raise DataError(f"unsupported container version {version}")
    pos = 5
    (n_meta,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    meta = json.loads(blob[pos:pos + n_meta].decode())
    pos += n_meta
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    arrays = {}
    try:
        for _ in range(count):
            (n_key,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + n_key].decode()
            pos += n_key
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}Q", blob, pos)
            pos += 8 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * size > len(blob):
                raise DataError(f"array {name!r} truncated")
            arrays[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * size
    except struct.error as exc:
        raise DataError("container truncated") from exc
    return arrays, meta


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    atomic_write(path, encode(arrays, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        blob = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {path}") from exc
    return decode(blob)
