# src/module/dcn_module.py
from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np

from ..baselines.dwconv import dwconv_arrays
from ..core.optimized import dcn_forward_opt
from ..core.plan import KernelPlan
from ..core.reference import dcn_forward_arrays
from ..tensor.nhwc import ElementType, TensorNHWC, from_array
from .layers import gelu, layer_norm, linear
from .params import ModuleParams, ModuleVariant, Style, check_params

log = logging.getLogger(__name__)


def _split(out: np.ndarray, params: ModuleParams) -> Tuple[np.ndarray, np.ndarray]:
    cfg = params.cfg
    N, H, W = out.shape[:3]
    GK = cfg.groups * cfg.points
    off = out[..., :2 * GK].reshape(N, H, W, cfg.groups, cfg.points, 2)
    w = out[..., 2 * GK:].reshape(N, H, W, cfg.groups, cfg.points)
    return np.ascontiguousarray(off), np.ascontiguousarray(w)


def _branch_input(x: np.ndarray, params: ModuleParams, variant: ModuleVariant, ln_eps: float) -> np.ndarray:
    h = dwconv_arrays(x, params.dw_w) if variant.use_dw_conv else x
    if variant.style is Style.V3:
        h = gelu(layer_norm(h, params.ln_scale, params.ln_shift, ln_eps))
    return h


def branch_forward(x: TensorNHWC, params: ModuleParams, variant: ModuleVariant,
                   ln_eps: float = 1e-6) -> Tuple[np.ndarray, np.ndarray]:
    """
    Offsets (N,H,W,G,K,2) and weights (N,H,W,G,K) predicted from x.
    v3 returns softmax-ready logits; v4 returns final unbounded weights.
    """
    check_params(params, variant)
    h = _branch_input(x.as_fp32(), params, variant, ln_eps)
    if variant.style is Style.V3:
        out = np.concatenate([linear(h, params.offset_w, params.offset_b),
                              linear(h, params.weight_w, params.weight_b)], axis=-1)
    else:
        out = linear(h, params.fused_w, params.fused_b)
    return _split(out, params)


def unfused_branch_forward(x: TensorNHWC, params: ModuleParams, variant: ModuleVariant) -> Tuple[np.ndarray, np.ndarray]:
    """v4 branch with the fused linear applied as two separate maps over its column split."""
    check_params(params, variant)
    if variant.style is Style.V3:
        raise ValueError("unfused_branch_forward applies to v4 branches")
    h = _branch_input(x.as_fp32(), params, variant, ln_eps=1e-6)
    n_off = 2 * params.cfg.groups * params.cfg.points
    off = linear(h, params.fused_w[:, :n_off], params.fused_b[:n_off])
    w = linear(h, params.fused_w[:, n_off:], params.fused_b[n_off:])
    return _split(np.concatenate([off, w], axis=-1), params)


def module_forward(x: TensorNHWC, params: ModuleParams, variant: ModuleVariant,
                   plan: Optional[KernelPlan] = None, ln_eps: float = 1e-6) -> TensorNHWC:
    """
    input_proj -> branch -> core aggregation -> output_proj.
    The branch reads the module input; the core aggregates the projected
    value. v3 runs the reference core with softmax, v4 the optimized core.
    """
    check_params(params, variant)
    xa = x.as_fp32()
    value = linear(xa, params.input_proj_w, params.input_proj_b) if variant.has_projections else xa
    off, w = branch_forward(x, params, variant, ln_eps)
    cfg = params.cfg.with_softmax(variant.softmax_weights)
    log.debug("module_forward variant=%s shape=%s", variant.label, x.shape)

    if variant.style is Style.V3:
        core = dcn_forward_arrays(value, off, w, cfg)
    else:
        dtype = plan.dtype if plan is not None else ElementType.FP32
        core = dcn_forward_opt(from_array(value, dtype), off, w, cfg, plan).as_fp32()

    out = linear(core, params.output_proj_w, params.output_proj_b) if variant.has_projections else core
    return from_array(out, ElementType.FP32)
