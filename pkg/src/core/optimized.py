# src/core/optimized.py
"""
Fast v4 aggregation (unbounded weights, no softmax).

Work is split over output rows (n, h) across threads, and each worker
walks its rows in tiles small enough to stay in cache. Inside a tile,
for every (group, point) the offsets and weight are read once, the four
bilinear coefficients are computed once, and the group's channels are
walked in blocks of d_prime contiguous lanes. With vector lanes on, one
row of the (pixel, group) x D view holds all D/d_prime lane blocks of a
group, so a single gather per corner serves every block of every group.
Which of those savings are active is decided by the KernelPlan, so the
same code runs every rung of the ablation ladder.

Every output element is owned by one tile and accumulated in the same
order as the reference (corners left to right, then points in grid
order), so results do not depend on the worker count or the stage.
"""
from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import UnsupportedConfigError
from ..parallel import map_chunks
from ..tensor.nhwc import ElementType, TensorNHWC
from .fields import DcnConfig, check_inputs
from .plan import KernelPlan, default_plan
from .sampling import corners, sample_coords

log = logging.getLogger(__name__)

TILE_ELEMS = 1 << 16  # output elements per tile

_FAULT = {"flip": False}


@contextmanager
def inject_coefficient_fault():
    """Test hook: negate the top-left bilinear weight of group 0, centre point."""
    _FAULT["flip"] = True
    try:
        yield
    finally:
        _FAULT["flip"] = False


@dataclass
class KernelCounters:
    offset_reads: int = 0       # elements read from offset and weight tables
    coefficient_sets: int = 0   # sample points whose 4 coefficients were computed
    loads: int = 0              # gather instructions over input elements

    def __iadd__(self, other: "KernelCounters") -> "KernelCounters":
        self.offset_reads += other.offset_reads
        self.coefficient_sets += other.coefficient_sets
        self.loads += other.loads
        return self


def _coefficients(py, px, H, W, flip: bool):
    cs = corners(py, px, H, W)
    coefs = list(cs.coefficients)
    if flip:
        coefs[0] = -coefs[0]
    return coefs, cs.indices


def sum_corners(coefs, vals) -> np.ndarray:
    c00, c01, c10, c11 = coefs
    v00, v01, v10, v11 = vals
    return c00 * v00 + c01 * v01 + c10 * v10 + c11 * v11


def _scalar_tile(xs: np.ndarray, off: np.ndarray, w: np.ndarray, cfg: DcnConfig, plan: KernelPlan,
                 start: int, stop: int, out: np.ndarray, ctr: Optional[KernelCounters]) -> None:
    """One channel at a time; offsets and coefficients per channel unless the plan amortizes them."""
    N, H, W, C = xs.shape
    G, K, D, dp = cfg.groups, cfg.points, cfg.group_dim, plan.d_prime
    rows = np.arange(start, stop)
    R = rows.size
    nn = (rows // H).reshape(R, 1)
    hh = (rows % H).astype(np.float32).reshape(R, 1)
    ww = np.arange(W, dtype=np.float32).reshape(1, W)
    off = off[start:stop]
    w = w[start:stop]
    acc = out[start:stop]
    acc[...] = 0.0
    per_point = R * W
    flip_at = K // 2 if _FAULT["flip"] else -1

    for g in range(G):
        for k, (dy, dx) in enumerate(cfg.grid()):
            flip = g == 0 and k == flip_at
            if plan.amortize_reads:
                oy, ox, mk = off[:, :, g, k, 0], off[:, :, g, k, 1], w[:, :, g, k]
                if ctr is not None:
                    ctr.offset_reads += 3 * per_point
            if plan.reuse_coefficients:
                py, px = sample_coords(hh, ww, dy, dx, oy, ox, cfg.offset_scale)
                coefs, idx = _coefficients(py, px, H, W, flip)
                if ctr is not None:
                    ctr.coefficient_sets += per_point
            for b0 in range(g * D, (g + 1) * D, dp):
                for c in range(b0, b0 + dp):
                    if not plan.amortize_reads:
                        oy, ox, mk = off[:, :, g, k, 0], off[:, :, g, k, 1], w[:, :, g, k]
                        if ctr is not None:
                            ctr.offset_reads += 3 * per_point
                    if not plan.reuse_coefficients:
                        py, px = sample_coords(hh, ww, dy, dx, oy, ox, cfg.offset_scale)
                        coefs, idx = _coefficients(py, px, H, W, flip)
                        if ctr is not None:
                            ctr.coefficient_sets += per_point
                    vals = [xs[nn, iy, ix, c].astype(np.float32, copy=False) for iy, ix in idx]
                    acc[:, :, c] = acc[:, :, c] + mk * sum_corners(coefs, vals)
                    if ctr is not None:
                        ctr.loads += 4 * per_point


def _lane_tile(xs: np.ndarray, off: np.ndarray, w: np.ndarray, cfg: DcnConfig, plan: KernelPlan,
               start: int, stop: int, out: np.ndarray, ctr: Optional[KernelCounters]) -> None:
    """All groups at once; one gather per corner moves every lane block of a group."""
    N, H, W, C = xs.shape
    G, K, D, dp = cfg.groups, cfg.points, cfg.group_dim, plan.d_prime
    rows_of = xs.reshape(N * H * W * G, D)
    rows = np.arange(start, stop)
    R = rows.size
    nn = (rows // H).reshape(R, 1, 1)
    hh = (rows % H).astype(np.float32).reshape(R, 1, 1)
    ww = np.arange(W, dtype=np.float32).reshape(1, W, 1)
    gg = np.arange(G).reshape(1, 1, G)
    off = off[start:stop]
    w = w[start:stop]
    points = R * W * G
    flip_at = K // 2 if _FAULT["flip"] else -1

    acc = out[start:stop].reshape(R, W, G, D)
    acc[...] = 0.0
    part = np.empty((R, W, G, D), dtype=np.float32)
    term = np.empty_like(part)
    lanes = np.empty((R, W, G, D), dtype=xs.dtype)

    for k, (dy, dx) in enumerate(cfg.grid()):
        oy, ox, mk = off[..., k, 0], off[..., k, 1], w[..., k]
        py, px = sample_coords(hh, ww, dy, dx, oy, ox, cfg.offset_scale)
        coefs, idx = _coefficients(py, px, H, W, flip=False)
        if k == flip_at:
            coefs[0][..., 0] = -coefs[0][..., 0]
        for j, ((iy, ix), cj) in enumerate(zip(idx, coefs)):
            flat = ((nn * H + iy) * W + ix) * G + gg
            np.take(rows_of, flat, axis=0, out=lanes, mode="clip")
            # fp16 lanes widen to fp32 inside the multiply
            np.multiply(cj[..., None], lanes, out=part if j == 0 else term)
            if j:
                np.add(part, term, out=part)
        np.multiply(mk[..., None], part, out=part)
        np.add(acc, part, out=acc)
        if ctr is not None:
            ctr.offset_reads += 3 * points
            ctr.coefficient_sets += points
            ctr.loads += 4 * points * (D // dp)


def _run_rows(xs: np.ndarray, off: np.ndarray, w: np.ndarray, cfg: DcnConfig, plan: KernelPlan,
              start: int, stop: int, out: np.ndarray, count: bool) -> KernelCounters:
    """Output rows [start, stop) of the (N*H) row space, tile by tile."""
    _, _, W, C = xs.shape
    tile = _lane_tile if plan.use_vector_lanes else _scalar_tile
    step = max(1, TILE_ELEMS // (W * C))
    ctr = KernelCounters() if count else None
    for a in range(start, stop, step):
        tile(xs, off, w, cfg, plan, a, min(a + step, stop), out, ctr)
    return ctr or KernelCounters()


def dcn_forward_opt(x: TensorNHWC, off: np.ndarray, w: np.ndarray, cfg: DcnConfig,
                    plan: Optional[KernelPlan] = None, counters: Optional[KernelCounters] = None,
                    workers: Optional[int] = None) -> TensorNHWC:
    """
    v4 forward. Pass a KernelCounters to have reads and coefficient
    computations tallied (exact, summed over all chunks).
    """
    if cfg.softmax_weights:
        raise UnsupportedConfigError(
            "softmax-normalized weights are not served by the optimized kernel; use dcn_forward_ref"
        )
    plan = plan or default_plan(cfg, x.dtype)
    plan.validate(cfg)
    off = np.asarray(off, dtype=np.float32)
    w = np.asarray(w, dtype=np.float32)
    check_inputs(x.shape, off, w, cfg)

    if x.dtype is plan.dtype:
        xs = x.data
    elif plan.dtype is ElementType.FP16:
        with np.errstate(over="ignore"):
            xs = x.data.astype(np.float16)
    else:
        xs = x.as_fp32()
    xs = np.ascontiguousarray(xs)

    N, H, W, C = x.shape
    G, K = cfg.groups, cfg.points
    off = off.reshape(N * H, W, G, K, 2)
    w = w.reshape(N * H, W, G, K)
    y = np.empty((N * H, W, C), dtype=np.float32)
    count = counters is not None
    log.debug("dcn_forward_opt shape=%s plan=%s", x.shape, plan)
    # workers write disjoint row ranges of y
    parts = map_chunks(lambda a, b: _run_rows(xs, off, w, cfg, plan, a, b, y, count), N * H, workers)
    if count:
        for ctr in parts:
            counters += ctr
    with np.errstate(over="ignore"):
        data = y.reshape(N, H, W, C).astype(plan.dtype.numpy_dtype, copy=False)
    data.setflags(write=False)
    return TensorNHWC(data, plan.dtype)
