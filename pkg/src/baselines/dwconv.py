# src/baselines/dwconv.py
"""
Depthwise k x k correlation, stride 1, zero-padded borders, with optional
softmax normalization of each channel's taps over its window.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigError, DimensionError
from ..tensor.nhwc import ElementType, TensorNHWC, from_array


@dataclass(frozen=True)
class DwKernel:
    taps: np.ndarray                    # (k, k, C)
    softmax_normalized: bool = False
    bias: Optional[np.ndarray] = None   # (C,), never normalized

    def __post_init__(self):
        taps = np.asarray(self.taps)
        if taps.ndim != 3 or taps.shape[0] != taps.shape[1]:
            raise DimensionError("taps", "(k, k, C)", taps.shape)
        if taps.shape[0] % 2 == 0:
            raise ConfigError(f"kernel size must be odd, got {taps.shape[0]}")

    @property
    def k(self) -> int:
        return int(self.taps.shape[0])

    @property
    def channels(self) -> int:
        return int(self.taps.shape[2])

    def effective_taps(self) -> np.ndarray:
        taps = np.asarray(self.taps)
        if not self.softmax_normalized:
            return taps
        k, _, c = taps.shape
        flat = taps.reshape(k * k, c)
        e = np.exp(flat - flat.max(axis=0, keepdims=True))
        return (e / e.sum(axis=0, keepdims=True)).reshape(k, k, c)


def pad_zeros(x: np.ndarray, pad: int) -> np.ndarray:
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))


def dwconv_arrays(x: np.ndarray, taps: np.ndarray, bias: Optional[np.ndarray] = None) -> np.ndarray:
    N, H, W, C = x.shape
    k = taps.shape[0]
    if taps.shape[2] != C:
        raise DimensionError("taps.C", C, taps.shape[2])
    p = (k - 1) // 2
    xp = pad_zeros(x, p)
    dt = np.result_type(x.dtype, taps.dtype, np.float32)
    y = np.zeros((N, H, W, C), dtype=dt)
    for i in range(k):
        for j in range(k):
            y = y + taps[i, j] * xp[:, i:i + H, j:j + W, :]
    if bias is not None:
        y = y + bias
    return y


def dwconv_forward(x: TensorNHWC, kern: DwKernel) -> TensorNHWC:
    taps = kern.effective_taps().astype(np.float32)
    bias = None if kern.bias is None else np.asarray(kern.bias, dtype=np.float32)
    return from_array(dwconv_arrays(x.as_fp32(), taps, bias), ElementType.FP32)


def window_views(x: np.ndarray, k: int) -> np.ndarray:
    """Zero-padded k x k windows around every location: (N, H, W, C, k, k)."""
    xp = pad_zeros(x, (k - 1) // 2)
    return np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))


def box_filter(x: np.ndarray, k: int) -> np.ndarray:
    """Window mean with zero padding (the pad counts in the denominator)."""
    return window_views(x, k).sum(axis=(-2, -1)) / (k * k)


def window_weighted_sum(x: np.ndarray, m: np.ndarray, k: int, groups: int) -> np.ndarray:
    """
    Oracle for zero-offset deformable aggregation:
    y[n,h,w,c] = sum_k m[n,h,w,g(c),k] * xpad[n, h+dy_k, w+dx_k, c].
    """
    N, H, W, C = x.shape
    D = C // groups
    win = window_views(x, k).reshape(N, H, W, groups, D, k * k)
    return np.einsum("nhwgdk,nhwgk->nhwgd", win, m).reshape(N, H, W, C)
