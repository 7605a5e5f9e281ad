# src/core/fields.py
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..errors import ConfigError, DimensionError


@dataclass(frozen=True)
class DcnConfig:
    """
    Geometry of one deformable aggregation.

    kernel_k        side of the k x k sampling grid (K = k*k points)
    groups          G, channel groups sharing offsets and weights
    channels        C, with C % G == 0
    softmax_weights True normalizes weights over K (v3); False keeps them raw (v4)
    offset_scale    multiplier applied to raw offsets
    """
    kernel_k: int
    groups: int
    channels: int
    softmax_weights: bool = False
    offset_scale: float = 1.0

    def __post_init__(self):
        if self.kernel_k < 1 or self.kernel_k % 2 == 0:
            raise ConfigError(f"kernel_k must be odd and >= 1, got {self.kernel_k}")
        if self.groups < 1 or self.channels < 1:
            raise ConfigError(f"groups and channels must be >= 1, got G={self.groups} C={self.channels}")
        if self.channels % self.groups:
            raise ConfigError(f"channels {self.channels} not divisible by groups {self.groups}")

    @property
    def points(self) -> int:
        return self.kernel_k * self.kernel_k

    @property
    def group_dim(self) -> int:
        return self.channels // self.groups

    @property
    def pad(self) -> int:
        return (self.kernel_k - 1) // 2

    @property
    def stride(self) -> int:
        return 1

    def grid(self) -> List[Tuple[int, int]]:
        """p_k as (dy, dx), row-major from (-pad, -pad) to (+pad, +pad)."""
        r = range(-self.pad, self.pad + 1)
        return [(dy, dx) for dy in r for dx in r]

    def with_softmax(self, on: bool) -> "DcnConfig":
        return DcnConfig(self.kernel_k, self.groups, self.channels, on, self.offset_scale)


def offset_shape(n: int, h: int, w: int, cfg: DcnConfig) -> Tuple[int, ...]:
    return (n, h, w, cfg.groups, cfg.points, 2)


def weight_shape(n: int, h: int, w: int, cfg: DcnConfig) -> Tuple[int, ...]:
    return (n, h, w, cfg.groups, cfg.points)


_AXES = ("N", "H", "W", "G", "K", "yx")


def _match(name: str, got: Tuple[int, ...], want: Tuple[int, ...]) -> None:
    if len(got) != len(want):
        raise DimensionError(f"{name}.ndim", len(want), len(got))
    for axis, g, w in zip(_AXES, got, want):
        if g != w:
            raise DimensionError(f"{name}.{axis}", w, g)


def check_inputs(x_shape, off: np.ndarray, w: np.ndarray, cfg: DcnConfig) -> None:
    """Raise DimensionError naming the first offending axis."""
    if len(x_shape) != 4:
        raise DimensionError("x.ndim", 4, len(x_shape))
    n, h, wd, c = x_shape
    if c != cfg.channels:
        raise DimensionError("x.C", cfg.channels, c)
    _match("offset", tuple(off.shape), offset_shape(n, h, wd, cfg))
    _match("weight", tuple(w.shape), weight_shape(n, h, wd, cfg))
