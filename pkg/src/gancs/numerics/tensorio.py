"""Binary tensor format: ``GCST`` magic, version, rank, extents, dtype tag, raw data."""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"GCST"
TENSOR_VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def write_tensor(stream, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype not in _TAGS:
        raise ValueError(f"unsupported tensor dtype {arr.dtype}")
    if arr.ndim > 255:
        raise ValueError("tensor rank exceeds 255")
    stream.write(struct.pack("<4sHB", TENSOR_MAGIC, TENSOR_VERSION, arr.ndim))
    stream.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    stream.write(struct.pack("<B", _TAGS[arr.dtype]))
    stream.write(np.ascontiguousarray(arr, dtype=_DTYPES[_TAGS[arr.dtype]]).tobytes())


def _read_exact(stream, n: int) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise ValueError("truncated tensor data")
    return data


def read_tensor(stream) -> np.ndarray:
    magic, version, rank = struct.unpack("<4sHB", _read_exact(stream, 7))
    if magic != TENSOR_MAGIC:
        raise ValueError(f"bad tensor magic {magic!r}")
    if version != TENSOR_VERSION:
        raise ValueError(f"unsupported tensor version {version}")
    shape = struct.unpack(f"<{rank}I", _read_exact(stream, 4 * rank))
    (tag,) = struct.unpack("<B", _read_exact(stream, 1))
    if tag not in _DTYPES:
        raise ValueError(f"unknown dtype tag {tag}")
    dtype = _DTYPES[tag]
    count = int(np.prod(shape, dtype=np.int64))
    data = np.frombuffer(_read_exact(stream, count * dtype.itemsize), dtype=dtype)
    return data.reshape(shape).astype(dtype.newbyteorder("="))


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, arr)
    return buf.getvalue()


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    return read_tensor(io.BytesIO(blob))


def save_tensor(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(tensor_to_bytes(arr))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)
