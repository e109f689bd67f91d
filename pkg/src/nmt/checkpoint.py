"""Binary checkpoint container.

Layout (all integers unsigned 32-bit little-endian)::

    b"NMTF1"                      5-byte magic
    record_count
    repeated record_count times:
        name_length, name (UTF-8 bytes)
        ndim, dim_0 ... dim_{ndim-1}
        payload: prod(dims) float32 little-endian values, row-major

Records keep the order in which they were written, so two checkpoints of
the same model can be diffed byte for byte.
"""

from __future__ import annotations

import os
import struct
import tempfile
from collections import OrderedDict
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import CheckpointFormatError

MAGIC = b"NMTF1"
_U32 = struct.Struct("<I")


def save_checkpoint(path: str | os.PathLike, arrays: Mapping[str, np.ndarray]) -> None:
    """Write ``arrays`` atomically (temp file in the same directory, then rename)."""
    path = Path(path)
    chunks = [MAGIC, _U32.pack(len(arrays))]
    for name, value in arrays.items():
        value = np.asarray(value, dtype="<f4", order="C")  # ascontiguousarray would promote 0-d to 1-d
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(value.ndim))
        chunks.extend(_U32.pack(d) for d in value.shape)
        chunks.append(value.tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(chunks))
        os.chmod(tmp, 0o644)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | os.PathLike) -> "OrderedDict[str, np.ndarray]":
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointFormatError(f"{path}: missing NMTF1 magic")
    offset = len(MAGIC)

    def u32() -> int:
        nonlocal offset
        if offset + 4 > len(raw):
            raise CheckpointFormatError(f"{path}: truncated header")
        (value,) = _U32.unpack_from(raw, offset)
        offset += 4
        return value

    arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(u32()):
        length = u32()
        if offset + length > len(raw):
            raise CheckpointFormatError(f"{path}: truncated record name")
        try:
            name = raw[offset : offset + length].decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointFormatError(f"{path}: record name is not UTF-8") from None
        if name in arrays:
            raise CheckpointFormatError(f"{path}: duplicate record {name!r}")
        offset += length
        shape = tuple(u32() for _ in range(u32()))
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 4 * count
        if end > len(raw):
            raise CheckpointFormatError(f"{path}: truncated payload for {name!r}")
        arrays[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape).astype(np.float32)
        offset = end
    if offset != len(raw):
        raise CheckpointFormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return arrays
