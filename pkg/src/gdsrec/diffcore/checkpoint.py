"""Binary checkpoint of named float64 arrays.

Layout (all integers little-endian)::

    magic   8 bytes   b"GDSRCKP1"
    count   u32       number of records
    record  repeated:
        name_len  u16, name  utf-8 bytes
        ndim      u8,  dims  ndim x u64
        values    prod(dims) x float64 little-endian, row-major

The encoding is a pure function of names, shapes and values, so equal
parameters give byte-identical files.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

MAGIC = b"GDSRCKP1"


class CheckpointError(ValueError):
    pass


def dumps(arrays: Iterable[tuple[str, np.ndarray]]) -> bytes:
    items = list(arrays)
    out = [MAGIC, struct.pack("<I", len(items))]
    for name, arr in items:
        arr = np.asarray(arr, dtype="<f8")  # keeps 0-d shapes; tobytes() is row-major
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)))
        out.append(raw)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def loads(data: bytes) -> dict[str, np.ndarray]:
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = 8
    try:
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}Q", data, pos)
            pos += 8 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * size > len(data):
                raise CheckpointError(f"truncated checkpoint: record {name!r} needs {8 * size} bytes")
            arr = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape)
            pos += 8 * size
            if name in arrays:
                raise CheckpointError(f"duplicate record {name!r}")
            arrays[name] = arr.astype(np.float64)
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes after last record")
    return arrays


def save(path: str | Path, arrays: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]) -> None:
    items = arrays.items() if isinstance(arrays, Mapping) else arrays
    Path(path).write_bytes(dumps(items))


def load(path: str | Path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
