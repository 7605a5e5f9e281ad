# src/core/sampling.py
"""
Bilinear sampling with zero padding.

A sample at (py, px) reads the four integer neighbours
(y0, x0), (y0, x0+1), (y0+1, x0), (y0+1, x0+1) with y0 = floor(py),
x0 = floor(px). Neighbours outside [0, H-1] x [0, W-1] read as 0.
NaN coordinates propagate to NaN samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from ..tensor.nhwc import TensorNHWC

ArrayLike = Union[TensorNHWC, np.ndarray]


def _array(x: ArrayLike) -> np.ndarray:
    return x.as_fp32() if isinstance(x, TensorNHWC) else np.asarray(x)


def bilinear_sample(x: ArrayLike, n: int, g: int, c_in_group: int, p: Tuple[float, float], group_dim: int) -> float:
    """Scalar bilinear sample of channel g*group_dim + c_in_group at p = (y, x)."""
    arr = _array(x)
    _, H, W, C = arr.shape
    if not 0 <= c_in_group < group_dim:
        raise IndexError(f"channel {c_in_group} outside group of {group_dim}")
    c = g * group_dim + c_in_group
    if not 0 <= c < C:
        raise IndexError(f"group {g} outside {C} channels")
    py, px = float(p[0]), float(p[1])
    if math.isnan(py) or math.isnan(px):
        return float("nan")

    y0, x0 = math.floor(py), math.floor(px)
    ly, lx = py - y0, px - x0
    hy, hx = 1.0 - ly, 1.0 - lx

    def at(yy: int, xx: int) -> float:
        if 0 <= yy < H and 0 <= xx < W:
            return float(arr[n, yy, xx, c])
        return 0.0

    return hy * hx * at(y0, x0) + hy * lx * at(y0, x0 + 1) + ly * hx * at(y0 + 1, x0) + ly * lx * at(y0 + 1, x0 + 1)


@dataclass
class Corners:
    """Clipped neighbour indices, validity masks and bilinear weights for an array of sample points."""
    y0: np.ndarray
    x0: np.ndarray
    y1: np.ndarray
    x1: np.ndarray
    valid: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    ly: np.ndarray
    lx: np.ndarray
    hy: np.ndarray
    hx: np.ndarray

    @property
    def coefficients(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        v00, v01, v10, v11 = self.valid
        return (
            self.hy * self.hx * v00,
            self.hy * self.lx * v01,
            self.ly * self.hx * v10,
            self.ly * self.lx * v11,
        )

    @property
    def indices(self):
        return ((self.y0, self.x0), (self.y0, self.x1), (self.y1, self.x0), (self.y1, self.x1))


def _floor_index(f: np.ndarray, size: int) -> np.ndarray:
    # -2 keeps both neighbours out of range; size keeps both out on the far side
    f = np.nan_to_num(f, nan=-2.0, posinf=float(size), neginf=-2.0)
    return np.clip(f, -2, size).astype(np.int64)


def corners(py: np.ndarray, px: np.ndarray, H: int, W: int) -> Corners:
    fy, fx = np.floor(py), np.floor(px)
    ly, lx = py - fy, px - fx
    hy, hx = 1 - ly, 1 - lx

    y0, x0 = _floor_index(fy, H), _floor_index(fx, W)
    y1, x1 = y0 + 1, x0 + 1
    iny0, iny1 = (y0 >= 0) & (y0 < H), (y1 >= 0) & (y1 < H)
    inx0, inx1 = (x0 >= 0) & (x0 < W), (x1 >= 0) & (x1 < W)
    dt = ly.dtype
    valid = (
        (iny0 & inx0).astype(dt),
        (iny0 & inx1).astype(dt),
        (iny1 & inx0).astype(dt),
        (iny1 & inx1).astype(dt),
    )
    return Corners(
        y0=np.clip(y0, 0, H - 1), x0=np.clip(x0, 0, W - 1),
        y1=np.clip(y1, 0, H - 1), x1=np.clip(x1, 0, W - 1),
        valid=valid, ly=ly, lx=lx, hy=hy, hx=hx,
    )


def base_grid(n: int, h: int, w: int, dtype) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch index (n,1,1) and float row/col coordinates broadcastable to (n,h,w)."""
    nn = np.arange(n).reshape(n, 1, 1)
    hh = np.arange(h, dtype=dtype).reshape(1, h, 1)
    ww = np.arange(w, dtype=dtype).reshape(1, 1, w)
    return nn, hh, ww


def sample_coords(hh: np.ndarray, ww: np.ndarray, dy: int, dx: int,
                  off_y: np.ndarray, off_x: np.ndarray, scale: float) -> Tuple[np.ndarray, np.ndarray]:
    """p0 + p_k + scale * dp, in the dtype of the offsets."""
    dt = off_y.dtype
    s = dt.type(scale)
    return (hh + dt.type(dy)) + s * off_y, (ww + dt.type(dx)) + s * off_x
