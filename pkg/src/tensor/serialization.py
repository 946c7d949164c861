"""Flat binary tensor format.

Layout: magic ``b"GSTN"``, version (u32), rank (u32), ``rank`` dimensions
(u64 each), then ``prod(dims)`` little-endian float64 values in row-major
order. All header integers are little-endian.
"""
import struct
from pathlib import Path

import numpy as np

from src.tensor.tensor import Tensor
from src.utils.errors import TensorFormatError


MAGIC = b"GSTN"
VERSION = 1
_PREFIX = struct.Struct("<4sII")
_DIM = struct.Struct("<Q")


def encode_tensor(values: np.ndarray | Tensor) -> bytes:
    array = values.data if isinstance(values, Tensor) else np.asarray(values, dtype=np.float64)
    if any(dim <= 0 for dim in array.shape):
        raise TensorFormatError(f"cannot encode shape {array.shape}: every dimension must be positive")
    header = _PREFIX.pack(MAGIC, VERSION, array.ndim) + b"".join(_DIM.pack(d) for d in array.shape)
    return header + np.ascontiguousarray(array, dtype="<f8").tobytes()


def decode_tensor(buffer: bytes, source: str = "<buffer>") -> np.ndarray:
    if len(buffer) < _PREFIX.size:
        raise TensorFormatError(f"{source}: truncated header at offset 0 ({len(buffer)} bytes)")
    magic, version, rank = _PREFIX.unpack_from(buffer, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"{source}: bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise TensorFormatError(f"{source}: unsupported version {version} at offset 4")
    offset = _PREFIX.size
    dims_end = offset + rank * _DIM.size
    if len(buffer) < dims_end:
        raise TensorFormatError(f"{source}: truncated dimensions at offset {offset}")
    shape = tuple(_DIM.unpack_from(buffer, offset + i * _DIM.size)[0] for i in range(rank))
    for i, dim in enumerate(shape):
        if dim == 0:
            raise TensorFormatError(f"{source}: zero dimension at offset {offset + i * _DIM.size}")
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    expected = count * 8
    payload = len(buffer) - dims_end
    if payload != expected:
        raise TensorFormatError(
            f"{source}: expected {expected} bytes of values at offset {dims_end}, found {payload}"
        )
    values = np.frombuffer(buffer, dtype="<f8", count=count, offset=dims_end)
    return values.astype(np.float64).reshape(shape)


def write_tensor(path: str | Path, values: np.ndarray | Tensor) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(values))


def read_tensor(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        buffer = path.read_bytes()
    except OSError as exc:
        raise TensorFormatError(f"{path}: unreadable ({exc.strerror})") from exc
    return decode_tensor(buffer, source=str(path))
