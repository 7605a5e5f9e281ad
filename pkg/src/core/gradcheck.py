# src/core/gradcheck.py
"""
Central finite differences against the reference forward, used as the
oracle for the analytic backward.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .fields import DcnConfig
from .reference import dcn_backward_arrays, dcn_forward_arrays, sample_points

log = logging.getLogger(__name__)

INPUTS = ("x", "off", "w")
OBJECTIVES = ("sum", "half_sq")


@dataclass
class ForwardProbe:
    """
    Scalar wrapper around the reference forward: sum(y) or 0.5*||y||^2.
    Inputs are held in float64 so differences with h ~ 1e-3 stay clear of
    rounding noise.
    """
    x: np.ndarray
    off: np.ndarray
    w: np.ndarray
    cfg: DcnConfig
    objective: str = "half_sq"

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        self.x = np.array(self.x, dtype=np.float64)
        self.off = np.array(self.off, dtype=np.float64)
        self.w = np.array(self.w, dtype=np.float64)

    def inputs(self) -> Dict[str, np.ndarray]:
        return {"x": self.x, "off": self.off, "w": self.w}

    def forward(self, **override: np.ndarray) -> np.ndarray:
        args = {**self.inputs(), **override}
        return dcn_forward_arrays(args["x"], args["off"], args["w"], self.cfg)

    def __call__(self, **override: np.ndarray) -> float:
        y = self.forward(**override)
        if self.objective == "sum":
            return float(np.sum(y))
        return float(0.5 * np.sum(y * y))

    def upstream(self) -> np.ndarray:
        y = self.forward()
        return np.ones_like(y) if self.objective == "sum" else y

    def analytic(self) -> Dict[str, np.ndarray]:
        gx, goff, gw = dcn_backward_arrays(self.x, self.off, self.w, self.cfg, self.upstream())
        return {"x": gx, "off": goff, "w": gw}


@dataclass
class FiniteDiffResult:
    grad: np.ndarray
    skipped: List[int] = field(default_factory=list)

    @property
    def mask(self) -> np.ndarray:
        """True where the coordinate was evaluated."""
        m = np.ones(self.grad.size, dtype=bool)
        m[self.skipped] = False
        return m.reshape(self.grad.shape)


def kink_skips(probe: ForwardProbe, h: float) -> List[int]:
    """Flat offset indices whose sample coordinate lies within 2h of an integer."""
    py, px = sample_points(probe.off, probe.cfg)
    coords = np.stack([py, px], axis=-1)
    reach = 2.0 * h * max(abs(probe.cfg.offset_scale), 1e-12)
    near = np.abs(coords - np.round(coords)) < reach
    return [int(i) for i in np.flatnonzero(near.reshape(-1))]


def finite_diff_grad(f: ForwardProbe, which_input: str, h: float = 1e-3) -> FiniteDiffResult:
    """(f(theta + h e_i) - f(theta - h e_i)) / 2h for every coordinate of one input."""
    if which_input not in INPUTS:
        raise ValueError(f"which_input must be one of {INPUTS}, got {which_input!r}")
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    base = f.inputs()[which_input]
    skipped = kink_skips(f, h) if which_input == "off" else []
    skip_set = set(skipped)
    grad = np.zeros(base.size, dtype=np.float64)
    theta = base.copy()
    flat = theta.reshape(-1)
    for i in range(flat.size):
        if i in skip_set:
            continue
        keep = flat[i]
        flat[i] = keep + h
        fplus = f(**{which_input: theta})
        flat[i] = keep - h
        fminus = f(**{which_input: theta})
        flat[i] = keep
        grad[i] = (fplus - fminus) / (2.0 * h)
    log.debug("finite_diff_grad input=%s coords=%d skipped=%d", which_input, flat.size, len(skipped))
    return FiniteDiffResult(grad.reshape(base.shape), skipped)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Elementwise |a - b| / max(|a|, |b|, floor)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def richardson_consistency(f: ForwardProbe, which_input: str, h: float = 1e-3) -> Tuple[float, FiniteDiffResult]:
    """
    Max relative gap between the h and h/2 estimates on coordinates both
    evaluated. Returns the gap and the h/2 result.
    """
    coarse = finite_diff_grad(f, which_input, h)
    fine = finite_diff_grad(f, which_input, h / 2)
    both = coarse.mask & fine.mask
    if not both.any():
        return 0.0, fine
    return float(np.max(relative_error(coarse.grad[both], fine.grad[both]))), fine


def compare_to_analytic(f: ForwardProbe, h: float = 1e-3) -> Dict[str, float]:
    """Max elementwise relative error between analytic and finite-difference gradients per input."""
    analytic = f.analytic()
    out = {}
    for name in INPUTS:
        fd = finite_diff_grad(f, name, h)
        m = fd.mask
        out[name] = float(np.max(relative_error(analytic[name][m], fd.grad[m]))) if m.any() else 0.0
    return out
