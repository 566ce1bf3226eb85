"""Binary parameter files.

Layout (all integers little-endian u32)::

    b"MFM1" | count | { name_len | name (utf-8) | rank | dims... | f64 LE payload }*
"""

from __future__ import annotations

import hashlib
import os
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import FormatError

MAGIC = b"MFM1"


def encode_params(params: Mapping[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<I", len(params))]
    for name, arr in params.items():
        arr = np.asarray(arr, dtype=np.float64)
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<I", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.astype("<f8", copy=False).tobytes(order="C"))
    return b"".join(out)


def decode_params(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise FormatError("not a checkpoint: bad magic bytes")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise FormatError("truncated checkpoint")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        try:
            name = take(nlen).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"bad parameter name: {exc}") from None
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape)) if rank else 1
        params[name] = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    if pos != len(blob):
        raise FormatError("trailing bytes after checkpoint payload")
    return params


def atomic_write(path: str | os.PathLike, data: bytes | str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_params(path, params: Mapping[str, np.ndarray]) -> str:
    """Write ``params`` and return the sha256 of the file contents."""
    blob = encode_params(params)
    atomic_write(path, blob)
    return hashlib.sha256(blob).hexdigest()


def load_params(path) -> dict[str, np.ndarray]:
    return decode_params(Path(path).read_bytes())
