# src/tensor/fixture.py
"""
DCNT fixture files.

Layout (little-endian):
  0  magic   b"DCNT"
  4  version u32 = 1
  8  dtype   u8  (0 = fp32, 1 = fp16)
  9  ndim    u8  = 4
  10 pad     2 bytes
  12 dims    4 x u64
  44 data    raw N->H->W->C values
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..errors import FixtureFormatError
from .nhwc import ElementType, TensorNHWC

MAGIC = b"DCNT"
VERSION = 1
_PREFIX = struct.Struct("<4sIBB2x")
_DIMS = struct.Struct("<4Q")
HEADER_BYTES = _PREFIX.size + _DIMS.size

_DTYPE_CODES = {ElementType.FP32: 0, ElementType.FP16: 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def encode(t: TensorNHWC) -> bytes:
    head = _PREFIX.pack(MAGIC, VERSION, _DTYPE_CODES[t.dtype], 4)
    return head + _DIMS.pack(*t.shape) + t.data.astype(t.dtype.numpy_dtype, copy=False).tobytes()


def decode(buf: bytes, path: Optional[str] = None) -> TensorNHWC:
    if len(buf) < _PREFIX.size:
        raise FixtureFormatError(f"truncated header: {len(buf)} bytes", len(buf), path)
    magic, version, code, ndim = _PREFIX.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FixtureFormatError(f"bad magic {magic!r}", 0, path)
    if version != VERSION:
        raise FixtureFormatError(f"unsupported version {version}", 4, path)
    if code not in _CODE_DTYPES:
        raise FixtureFormatError(f"unknown dtype code {code}", 8, path)
    if ndim != 4:
        raise FixtureFormatError(f"ndim must be 4, got {ndim}", 9, path)
    if len(buf) < HEADER_BYTES:
        raise FixtureFormatError("truncated dims", len(buf), path)
    dims = _DIMS.unpack_from(buf, _PREFIX.size)
    if any(d < 1 for d in dims):
        raise FixtureFormatError(f"non-positive dimension in {dims}", _PREFIX.size, path)
    dtype = _CODE_DTYPES[code]
    want = int(np.prod(dims)) * dtype.bytes_per_element
    have = len(buf) - HEADER_BYTES
    if have != want:
        raise FixtureFormatError(f"payload is {have} bytes, expected {want}", HEADER_BYTES + min(have, want), path)
    data = np.frombuffer(buf, dtype=dtype.numpy_dtype, offset=HEADER_BYTES).reshape(dims)
    return TensorNHWC(data.copy(), dtype)


def write_fixture(t: TensorNHWC, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(encode(t))


def read_fixture(path: Union[str, Path]) -> TensorNHWC:
    with open(path, "rb") as f:
        buf = f.read()
    return decode(buf, str(path))
