"""Binary encoding of named float32 tensors.

Each record is: uint32 name length, UTF-8 name, uint32 ndim, ndim x uint32
shape, then the values as little-endian float32 in row-major order. All
integers are little-endian.
"""
from __future__ import annotations

import struct
from typing import BinaryIO, Iterable

import numpy as np

from .errors import FormatError

_U32 = struct.Struct("<I")
_I32 = struct.Struct("<i")


def write_u32(fh: BinaryIO, value: int) -> None:
    fh.write(_U32.pack(value))


def read_u32(fh: BinaryIO) -> int:
    buf = fh.read(4)
    if len(buf) != 4:
        raise FormatError("unexpected end of file")
    return _U32.unpack(buf)[0]


def write_i32(fh: BinaryIO, value: int) -> None:
    fh.write(_I32.pack(value))


def read_i32(fh: BinaryIO) -> int:
    buf = fh.read(4)
    if len(buf) != 4:
        raise FormatError("unexpected end of file")
    return _I32.unpack(buf)[0]


def write_tensor(fh: BinaryIO, name: str, array: np.ndarray) -> None:
    raw = name.encode("utf-8")
    write_u32(fh, len(raw))
    fh.write(raw)
    arr = np.ascontiguousarray(array, dtype="<f4")
    write_u32(fh, arr.ndim)
    for n in arr.shape:
        write_u32(fh, n)
    fh.write(arr.tobytes(order="C"))


def read_tensor(fh: BinaryIO) -> tuple[str, np.ndarray]:
    name_len = read_u32(fh)
    raw = fh.read(name_len)
    if len(raw) != name_len:
        raise FormatError("truncated tensor name")
    ndim = read_u32(fh)
    shape = tuple(read_u32(fh) for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    buf = fh.read(4 * count)
    if len(buf) != 4 * count:
        raise FormatError(f"truncated data for tensor {raw.decode('utf-8', 'replace')!r}")
    arr = np.frombuffer(buf, dtype="<f4").astype(np.float32).reshape(shape)
    return raw.decode("utf-8"), arr


def write_tensors(fh: BinaryIO, tensors: Iterable[tuple[str, np.ndarray]]) -> None:
    items = list(tensors)
    write_u32(fh, len(items))
    for name, arr in items:
        write_tensor(fh, name, arr)


def read_tensors(fh: BinaryIO) -> dict[str, np.ndarray]:
    n = read_u32(fh)
    out = {}
    for _ in range(n):
        name, arr = read_tensor(fh)
        out[name] = arr
    return out
