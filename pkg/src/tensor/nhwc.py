# src/tensor/nhwc.py
"""
Channel-last dense tensors.

A TensorNHWC wraps a read-only, C-contiguous numpy array of shape
(N, H, W, C). fp16 is a storage format only: every consumer widens to
fp32 (``as_fp32``) before doing arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np

from ..errors import InvalidShapeError

Shape = Tuple[int, int, int, int]


class ElementType(Enum):
    FP32 = "fp32"
    FP16 = "fp16"

    @property
    def tag(self) -> str:
        return self.value

    @property
    def bytes_per_element(self) -> int:
        return 4 if self is ElementType.FP32 else 2

    @property
    def numpy_dtype(self) -> np.dtype:
        return np.dtype("<f4") if self is ElementType.FP32 else np.dtype("<f2")

    @classmethod
    def parse(cls, text: str) -> "ElementType":
        t = str(text).strip().lower()
        if t in ("fp32", "f32", "float32"):
            return cls.FP32
        if t in ("fp16", "f16", "float16", "fp16-storage"):
            return cls.FP16
        raise ValueError(f"unknown element type: {text!r}")


@dataclass(frozen=True)
class Zeros:
    pass


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class SeededUniform:
    seed: int
    lo: float = -1.0
    hi: float = 1.0


FillSpec = Union[Zeros, Constant, SeededUniform]


@dataclass(frozen=True, eq=False)
class TensorNHWC:
    data: np.ndarray
    dtype: ElementType

    def __post_init__(self):
        if self.data.ndim != 4:
            raise InvalidShapeError(f"TensorNHWC needs 4 dims, got {self.data.ndim}")
        if self.data.dtype != self.dtype.numpy_dtype:
            raise InvalidShapeError(f"data dtype {self.data.dtype} does not match {self.dtype.tag}")
        if not self.data.flags.c_contiguous:
            object.__setattr__(self, "data", np.ascontiguousarray(self.data))
        if self.data.flags.writeable:
            arr = self.data.copy()
            arr.setflags(write=False)
            object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> Shape:
        n, h, w, c = self.data.shape
        return int(n), int(h), int(w), int(c)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def strides_elems(self) -> Shape:
        _, h, w, c = self.shape
        return h * w * c, w * c, c, 1

    def flat_index(self, n: int, h: int, w: int, c: int) -> int:
        _, H, W, C = self.shape
        return ((n * H + h) * W + w) * C + c

    def as_fp32(self) -> np.ndarray:
        if self.dtype is ElementType.FP32:
            return self.data
        return self.data.astype(np.float32)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorNHWC):
            return NotImplemented
        return self.dtype is other.dtype and self.shape == other.shape and self.data.tobytes() == other.data.tobytes()

    def __repr__(self) -> str:
        return f"TensorNHWC(shape={self.shape}, dtype={self.dtype.tag})"


def _check_shape(shape) -> Shape:
    if len(shape) != 4:
        raise InvalidShapeError(f"shape must have 4 dims (N,H,W,C), got {tuple(shape)}")
    dims = tuple(int(d) for d in shape)
    for name, d in zip("NHWC", dims):
        if d < 1:
            raise InvalidShapeError(f"dimension {name} must be >= 1, got {d}")
    return dims  # type: ignore[return-value]


def from_array(arr: np.ndarray, dtype: ElementType = ElementType.FP32) -> TensorNHWC:
    """Wrap an (N,H,W,C) array, converting to the storage dtype (RNE for fp16)."""
    _check_shape(np.shape(arr))
    with np.errstate(over="ignore"):
        data = np.ascontiguousarray(np.asarray(arr, dtype=np.float32).astype(dtype.numpy_dtype))
    return TensorNHWC(data, dtype)


def create(shape, dtype: ElementType = ElementType.FP32, fill: FillSpec = Zeros()) -> TensorNHWC:
    dims = _check_shape(shape)
    count = int(np.prod(dims))
    if isinstance(fill, Zeros):
        vals = np.zeros(count, dtype=np.float32)
    elif isinstance(fill, Constant):
        vals = np.full(count, fill.value, dtype=np.float32)
    elif isinstance(fill, SeededUniform):
        # one generator stream, drawn in flat N->H->W->C order
        rng = np.random.default_rng(fill.seed)
        vals = rng.uniform(fill.lo, fill.hi, size=count).astype(np.float32)
    else:
        raise TypeError(f"unknown fill spec: {fill!r}")
    return from_array(vals.reshape(dims), dtype)


def cast(t: TensorNHWC, target: ElementType) -> TensorNHWC:
    """fp32 -> fp16 rounds to nearest even and saturates to +-inf; fp16 -> fp32 is exact."""
    if t.dtype is target:
        return t
    with np.errstate(over="ignore"):
        data = t.data.astype(target.numpy_dtype)
    return TensorNHWC(data, target)
