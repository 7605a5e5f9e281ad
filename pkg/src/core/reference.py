# src/core/reference.py
"""
Reference deformable aggregation.

For every output location p0 and group g:

    y_g(p0) = sum_k m'_gk * x_g(p0 + p_k + offset_scale * dp_gk)

with m' = softmax over K of m when cfg.softmax_weights, else m itself;
groups are concatenated along channels. Single-threaded, loops over
(group, point) and treats the group's channels as one vector, exactly
as the formula is written. This is the ground truth for the optimized
kernel and the gradient oracle.

Functions ending in ``_arrays`` take plain numpy arrays and compute in
their floating dtype (float32 or float64); the public entry points take
TensorNHWC inputs and compute in fp32.
"""
from __future__ import annotations

import logging
from typing import Tuple

import numpy as np

from ..tensor.nhwc import ElementType, TensorNHWC, from_array
from .fields import DcnConfig, check_inputs
from .sampling import base_grid, corners, sample_coords

log = logging.getLogger(__name__)


def _compute_dtype(*arrays: np.ndarray) -> np.dtype:
    return np.result_type(np.float32, *[a.dtype for a in arrays])


def softmax_k(w: np.ndarray) -> np.ndarray:
    """Softmax over the last axis (K), shifted by the row max."""
    w = np.asarray(w)
    if not np.issubdtype(w.dtype, np.floating):
        w = w.astype(np.float32)
    shifted = w - np.max(w, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def aggregation_weights(w: np.ndarray, cfg: DcnConfig) -> np.ndarray:
    return softmax_k(w) if cfg.softmax_weights else w


def sample_points(off: np.ndarray, cfg: DcnConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Absolute (py, px) of every sample, each shaped (N,H,W,G,K)."""
    n, h, w = off.shape[:3]
    _, hh, ww = base_grid(n, h, w, off.dtype)
    py = np.empty(off.shape[:5], dtype=off.dtype)
    px = np.empty(off.shape[:5], dtype=off.dtype)
    hh, ww = hh[..., None], ww[..., None]
    for k, (dy, dx) in enumerate(cfg.grid()):
        py[..., k], px[..., k] = sample_coords(hh, ww, dy, dx, off[..., k, 0], off[..., k, 1], cfg.offset_scale)
    return py, px


def sampled_values_arrays(x: np.ndarray, off: np.ndarray, cfg: DcnConfig) -> np.ndarray:
    """Every bilinear sample s_k, shaped (N,H,W,G,K,D). Memory grows with K*C; use on small inputs."""
    N, H, W, C = x.shape
    G, K, D = cfg.groups, cfg.points, cfg.group_dim
    dt = _compute_dtype(x, off)
    x, off = x.astype(dt, copy=False), off.astype(dt, copy=False)
    nn, hh, ww = base_grid(N, H, W, dt)
    out = np.empty((N, H, W, G, K, D), dtype=dt)
    for g in range(G):
        xg = x[..., g * D:(g + 1) * D]
        for k, (dy, dx) in enumerate(cfg.grid()):
            py, px = sample_coords(hh, ww, dy, dx, off[..., g, k, 0], off[..., g, k, 1], cfg.offset_scale)
            cs = corners(py, px, H, W)
            out[..., g, k, :] = _gather_sum(xg, nn, cs)
    return out


def _gather_sum(xg: np.ndarray, nn: np.ndarray, cs) -> np.ndarray:
    c00, c01, c10, c11 = cs.coefficients
    (a, b), (c, d), (e, f), (g, h) = cs.indices
    return (
        c00[..., None] * xg[nn, a, b]
        + c01[..., None] * xg[nn, c, d]
        + c10[..., None] * xg[nn, e, f]
        + c11[..., None] * xg[nn, g, h]
    )


def dcn_forward_arrays(x: np.ndarray, off: np.ndarray, w: np.ndarray, cfg: DcnConfig) -> np.ndarray:
    check_inputs(x.shape, off, w, cfg)
    N, H, W, C = x.shape
    D = cfg.group_dim
    dt = _compute_dtype(x, off, w)
    x, off, w = x.astype(dt, copy=False), off.astype(dt, copy=False), w.astype(dt, copy=False)
    m = aggregation_weights(w, cfg)
    nn, hh, ww = base_grid(N, H, W, dt)
    y = np.empty((N, H, W, C), dtype=dt)
    for g in range(cfg.groups):
        xg = x[..., g * D:(g + 1) * D]
        acc = np.zeros((N, H, W, D), dtype=dt)
        for k, (dy, dx) in enumerate(cfg.grid()):
            py, px = sample_coords(hh, ww, dy, dx, off[..., g, k, 0], off[..., g, k, 1], cfg.offset_scale)
            s = _gather_sum(xg, nn, corners(py, px, H, W))
            acc = acc + m[..., g, k, None] * s
        y[..., g * D:(g + 1) * D] = acc
    return y


def dcn_forward_ref(x: TensorNHWC, off: np.ndarray, w: np.ndarray, cfg: DcnConfig) -> TensorNHWC:
    off = np.asarray(off, dtype=np.float32)
    w = np.asarray(w, dtype=np.float32)
    log.debug("dcn_forward_ref shape=%s cfg=%s", x.shape, cfg)
    y = dcn_forward_arrays(x.as_fp32(), off, w, cfg)
    return from_array(y, ElementType.FP32)


def dcn_backward_arrays(x: np.ndarray, off: np.ndarray, w: np.ndarray, cfg: DcnConfig,
                        grad_y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Analytic gradients (grad_x, grad_off, grad_w).

    grad_off uses the derivative of the bilinear hat inside the sample's
    cell; exactly on an integer coordinate the sub-gradient 0 is taken.
    grad_w goes through the softmax Jacobian when weights are normalized.
    """
    check_inputs(x.shape, off, w, cfg)
    if grad_y.shape != x.shape:
        raise ValueError(f"grad_y shape {grad_y.shape} != output shape {x.shape}")
    N, H, W, C = x.shape
    D = cfg.group_dim
    dt = _compute_dtype(x, off, w, grad_y)
    x, off, w, grad_y = (a.astype(dt, copy=False) for a in (x, off, w, grad_y))
    m = aggregation_weights(w, cfg)
    scale = dt.type(cfg.offset_scale)
    nn, hh, ww = base_grid(N, H, W, dt)

    grad_x = np.zeros_like(x)
    grad_off = np.zeros_like(off)
    grad_m = np.zeros_like(w)
    for g in range(cfg.groups):
        xg = x[..., g * D:(g + 1) * D]
        gyg = grad_y[..., g * D:(g + 1) * D]
        gxg = grad_x[..., g * D:(g + 1) * D]
        for k, (dy, dx) in enumerate(cfg.grid()):
            py, px = sample_coords(hh, ww, dy, dx, off[..., g, k, 0], off[..., g, k, 1], cfg.offset_scale)
            cs = corners(py, px, H, W)
            (a, b), (c, d), (e, f), (gi, hi) = cs.indices
            raw = (xg[nn, a, b], xg[nn, c, d], xg[nn, e, f], xg[nn, gi, hi])
            # out-of-bounds neighbours read as zero
            v00, v01, v10, v11 = (mask[..., None] * v for mask, v in zip(cs.valid, raw))
            c00, c01, c10, c11 = cs.coefficients
            s = c00[..., None] * v00 + c01[..., None] * v01 + c10[..., None] * v10 + c11[..., None] * v11
            mk = m[..., g, k]

            grad_m[..., g, k] = np.sum(gyg * s, axis=-1)

            hx, lx, hy, ly = cs.hx[..., None], cs.lx[..., None], cs.hy[..., None], cs.ly[..., None]
            ds_dy = hx * (v10 - v00) + lx * (v11 - v01)
            ds_dx = hy * (v01 - v00) + ly * (v11 - v10)
            gdy = np.sum(gyg * ds_dy, axis=-1)
            gdx = np.sum(gyg * ds_dx, axis=-1)
            gdy = np.where(cs.ly == 0, 0, gdy)
            gdx = np.where(cs.lx == 0, 0, gdx)
            grad_off[..., g, k, 0] = scale * mk * gdy
            grad_off[..., g, k, 1] = scale * mk * gdx

            upstream = mk[..., None] * gyg
            for coef, (iy, ix) in zip((c00, c01, c10, c11), cs.indices):
                np.add.at(gxg, (np.broadcast_to(nn, iy.shape), iy, ix), coef[..., None] * upstream)

    if cfg.softmax_weights:
        grad_w = m * (grad_m - np.sum(m * grad_m, axis=-1, keepdims=True))
    else:
        grad_w = grad_m
    return grad_x, grad_off, grad_w


def dcn_backward_ref(x: TensorNHWC, off: np.ndarray, w: np.ndarray, cfg: DcnConfig,
                     grad_y: TensorNHWC) -> Tuple[TensorNHWC, np.ndarray, np.ndarray]:
    gx, goff, gw = dcn_backward_arrays(
        x.as_fp32(), np.asarray(off, dtype=np.float32), np.asarray(w, dtype=np.float32), cfg, grad_y.as_fp32()
    )
    return from_array(gx, ElementType.FP32), goff, gw
