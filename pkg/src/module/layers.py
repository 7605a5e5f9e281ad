# src/module/layers.py
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from ..parallel import map_chunks

_ROW_BLOCK = 4096


def _linear_rows(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty((x.shape[0], w.shape[1]), dtype=np.result_type(x, w, np.float32))
    for r0 in range(0, x.shape[0], _ROW_BLOCK):
        xr = x[r0:r0 + _ROW_BLOCK]
        acc = np.zeros((xr.shape[0], w.shape[1]), dtype=out.dtype)
        for c in range(w.shape[0]):
            acc = acc + xr[:, c:c + 1] * w[c]
        out[r0:r0 + _ROW_BLOCK] = acc + b
    return out


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray, workers=None) -> np.ndarray:
    """
    x @ w + b over the last axis, accumulated input channel by input
    channel. Each output column's sum order is independent of the other
    columns, so a fused weight matrix and its column split give
    bit-identical results.
    """
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    parts = map_chunks(lambda a, z: _linear_rows(flat[a:z], w, b), flat.shape[0], workers)
    return np.concatenate(parts, axis=0).reshape(*lead, w.shape[1])


def layer_norm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + x.dtype.type(eps)) * scale + shift


def gelu(x: np.ndarray) -> np.ndarray:
    # exact erf form
    return (0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))).astype(x.dtype, copy=False)


def he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)
