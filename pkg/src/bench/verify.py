# src/bench/verify.py
"""
Property suites run by `verify`. Each suite returns a SuiteResult with
its worst error and, on failure, the seed that reproduces the first
failing case. Reports contain no timings, so a fixed seed yields a
byte-identical report whatever the worker count.
"""
from __future__ import annotations

import logging
import math
from contextlib import nullcontext
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional

import numpy as np

from ..baselines.attention import (
    degeneration_check,
    degeneration_tolerance,
    find_softmax_counterexample,
    seeded_inputs,
)
from ..baselines.dwconv import DwKernel, box_filter, dwconv_arrays, window_views
from ..core.fields import DcnConfig, offset_shape, weight_shape
from ..core.gradcheck import ForwardProbe, compare_to_analytic
from ..core.optimized import KernelCounters, dcn_forward_opt, inject_coefficient_fault
from ..core.plan import KernelPlan, Stage, default_plan
from ..core.reference import dcn_forward_arrays, dcn_forward_ref, sampled_values_arrays
from ..errors import ConfigError
from ..module.dcn_module import branch_forward, unfused_branch_forward
from ..module.layers import linear
from ..module.params import (
    ModuleVariant,
    Style,
    init_params,
    module_layer_count,
    param_count,
    primitive_layer_count,
)
from ..roofline.model import roofline
from ..tensor.nhwc import ElementType, SeededUniform, cast, create

log = logging.getLogger(__name__)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_error: float
    cases: int
    first_failing_seed: Optional[int] = None
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        s = f"{status} {self.name:<14} cases={self.cases:<6} max_err={self.max_error:.3e}"
        if self.first_failing_seed is not None:
            s += f" first_failing_seed={self.first_failing_seed}"
        if self.detail:
            s += f" {self.detail}"
        return s


@dataclass
class VerifyReport:
    seed: int
    suites: List[SuiteResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def render(self) -> str:
        lines = [f"verify seed={self.seed}"] + [s.line() for s in self.suites]
        lines.append("ALL PASS" if self.passed else "FAILED")
        return "\n".join(lines)


def max_rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """max|a - b| / max(max|b|, 1e-12), b being the reference."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1e-12))


def _case_seed(seed: int, i: int) -> int:
    return seed * 1_000_003 + i


def random_case(case_seed: int, max_hw: int = 32, max_c: int = 64):
    """Random DCN problem up to (2, 32, 32, 64), G in {1,2,4}, k in {1,3,5}."""
    rng = np.random.default_rng(case_seed)
    G = int(rng.choice([1, 2, 4]))
    k = int(rng.choice([1, 3, 5]))
    D = int(rng.choice([d for d in (4, 8, 16) if G * d <= max_c]))
    N = int(rng.integers(1, 3))
    H = int(rng.integers(1, max_hw + 1))
    W = int(rng.integers(1, max_hw + 1))
    cfg = DcnConfig(k, G, G * D)
    x = create((N, H, W, G * D), ElementType.FP32, SeededUniform(case_seed))
    off = rng.uniform(-3.0, 3.0, size=offset_shape(N, H, W, cfg)).astype(np.float32)
    w = rng.uniform(-1.0, 1.0, size=weight_shape(N, H, W, cfg)).astype(np.float32)
    return x, off, w, cfg


def equivalence_suite(seed: int = 7, cases: int = 1000, tol_fp32: float = 1e-5, tol_fp16: float = 2e-2,
                      fp16_every: int = 4, inject_fault: bool = False) -> List[SuiteResult]:
    """Optimized vs reference forward on random cases; every `fp16_every`-th case also in fp16 storage."""
    worst32 = worst16 = 0.0
    fail32: Optional[int] = None
    fail16: Optional[int] = None
    n16 = 0
    guard = inject_coefficient_fault if inject_fault else nullcontext
    with guard():
        for i in range(cases):
            cs = _case_seed(seed, i)
            x, off, w, cfg = random_case(cs)
            ref = dcn_forward_ref(x, off, w, cfg)
            err = max_rel_error(dcn_forward_opt(x, off, w, cfg).as_fp32(), ref.as_fp32())
            worst32 = max(worst32, err)
            if err > tol_fp32 and fail32 is None:
                fail32 = cs
                log.info("equivalence fp32 failure at case seed %d: %.3e", cs, err)
            if i % fp16_every == 0:
                n16 += 1
                # fp16 storage against the fp32 reference on the unrounded x
                y16 = dcn_forward_opt(cast(x, ElementType.FP16), off, w, cfg, default_plan(cfg, ElementType.FP16))
                err16 = max_rel_error(y16.as_fp32(), ref.as_fp32())
                worst16 = max(worst16, err16)
                if err16 > tol_fp16 and fail16 is None:
                    fail16 = cs
    return [
        SuiteResult("equiv-fp32", fail32 is None, worst32, cases, fail32),
        SuiteResult("equiv-fp16", fail16 is None, worst16, n16, fail16),
    ]


def counters_suite(seed: int = 7, cases: int = 8) -> SuiteResult:
    """Offset reads == 3*NHWGK and coefficient sets == NHWGK for every valid d_prime; baseline reads per channel."""
    bad: Optional[int] = None
    for i in range(cases):
        cs = _case_seed(seed, i)
        x, off, w, cfg = random_case(cs, max_hw=8)
        N, H, W, _ = x.shape
        points = N * H * W * cfg.groups * cfg.points
        ok = True
        for d in (d for d in (1, 2, 4, 8, 16) if cfg.group_dim % d == 0):
            plan = KernelPlan.for_stage(Stage.COEFF_REUSE, d)
            ctr = KernelCounters()
            dcn_forward_opt(x, off, w, cfg, plan, counters=ctr)
            ok &= ctr.offset_reads == 3 * points and ctr.coefficient_sets == points
        ctr = KernelCounters()
        dcn_forward_opt(x, off, w, cfg, KernelPlan.for_stage(Stage.BASELINE), counters=ctr)
        ok &= ctr.offset_reads == 3 * points * cfg.group_dim
        if not ok and bad is None:
            bad = cs
    return SuiteResult("counters", bad is None, 0.0 if bad is None else 1.0, cases, bad)


def gradcheck_instance(case_seed: int, softmax: bool, h: float = 1e-3):
    rng = np.random.default_rng(case_seed)
    cfg = DcnConfig(3, 2, 8, softmax_weights=softmax)
    x = rng.uniform(-1.0, 1.0, size=(1, 5, 5, 8))
    off = rng.uniform(-1.5, 1.5, size=offset_shape(1, 5, 5, cfg))
    w = rng.uniform(-1.0, 1.0, size=weight_shape(1, 5, 5, cfg))
    return compare_to_analytic(ForwardProbe(x, off, w, cfg, "half_sq"), h)


def gradcheck_suite(seed: int = 7, instances: int = 20, h: float = 1e-3, tol: float = 1e-3) -> List[SuiteResult]:
    out = []
    for softmax in (False, True):
        worst, bad = 0.0, None
        for i in range(instances):
            cs = _case_seed(seed, i)
            errs = gradcheck_instance(cs, softmax, h)
            e = max(errs.values())
            worst = max(worst, e)
            if e > tol and bad is None:
                bad = cs
        name = "grad-softmax" if softmax else "grad-raw"
        out.append(SuiteResult(name, bad is None, worst, instances, bad))
    return out


def degeneration_suite(seed: int = 7, instances: int = 100) -> List[SuiteResult]:
    """No-softmax attention equals its reordered linear form; softmax attention does not."""
    rng = np.random.default_rng(seed)
    worst, bad = 0.0, None
    for i in range(instances):
        s = _case_seed(seed, i)
        inp = seeded_inputs(s, int(rng.integers(1, 65)), int(rng.integers(1, 33)))
        gap = degeneration_check(inp, use_softmax=False)
        tol = degeneration_tolerance(inp)
        worst = max(worst, gap * 1e-5 / tol)  # relative to 1 + max|direct|
        if gap > tol and bad is None:
            bad = s
    found = find_softmax_counterexample(seed=seed)
    counter = SuiteResult(
        "softmax-breaks", found is not None, 0.0 if found is None else found[1], 1,
        None, "" if found is None else f"seed={found[0]}",
    )
    return [SuiteResult("degeneration", bad is None, worst, instances, bad), counter]


def _convex_violations(y: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> int:
    scale = 1e-12 * (1.0 + np.maximum(np.abs(lo), np.abs(hi)))
    return int(np.count_nonzero((y < lo - scale) | (y > hi + scale)))


def convexity_suite(seed: int = 7, probes: int = 10000) -> List[SuiteResult]:
    """Softmax-weighted outputs stay inside [min, max] of the values they combine."""
    results = []
    for name in ("convex-dcn", "convex-dwconv"):
        seen, violations, bad, i = 0, 0, None, 0
        while seen < probes:
            cs = _case_seed(seed, i)
            i += 1
            rng = np.random.default_rng(cs)
            x = rng.uniform(-1.0, 1.0, size=(1, 8, 8, 16))
            if name == "convex-dcn":
                cfg = DcnConfig(3, 2, 16, softmax_weights=True)
                off = rng.uniform(-2.0, 2.0, size=offset_shape(1, 8, 8, cfg))
                logits = rng.normal(0.0, 3.0, size=weight_shape(1, 8, 8, cfg))
                y = dcn_forward_arrays(x, off, logits, cfg)
                s = sampled_values_arrays(x, off, cfg)        # (N,H,W,G,K,D)
                lo = s.min(axis=4).reshape(y.shape)
                hi = s.max(axis=4).reshape(y.shape)
            else:
                kern = DwKernel(rng.normal(0.0, 3.0, size=(3, 3, 16)), softmax_normalized=True)
                y = dwconv_arrays(x, kern.effective_taps())
                win = window_views(x, 3)
                lo, hi = win.min(axis=(-2, -1)), win.max(axis=(-2, -1))
            take = min(probes - seen, y.size)
            v = _convex_violations(y.reshape(-1)[:take], lo.reshape(-1)[:take], hi.reshape(-1)[:take])
            seen += take
            violations += v
            if v and bad is None:
                bad = cs
        results.append(SuiteResult(name, violations == 0, float(violations), seen, bad))
    return results


def ledger_suite(seed: int = 7) -> SuiteResult:
    """Parameter and layer counts, fused branch equality, zero-init branch as a box filter."""
    problems: List[str] = []
    for C in (64, 128, 256):
        G = C // 16
        diff = param_count(C, G, 9, ModuleVariant(Style.V3)) - param_count(C, G, 9, ModuleVariant(Style.V4))
        if diff != 2 * C:
            problems.append(f"param diff {diff} != {2 * C} at C={C}")
    for variant in (ModuleVariant(Style.V3), ModuleVariant(Style.V4), ModuleVariant(Style.V4, False),
                    ModuleVariant(Style.V4_LIGHT)):
        cfg = DcnConfig(3, 2, 16, softmax_weights=variant.softmax_weights)
        p = init_params(cfg, variant, seed)
        if p.count() != param_count(16, 2, 9, variant):
            problems.append(f"param_count mismatch for {variant.label}")
    if (primitive_layer_count(ModuleVariant(Style.V3)), primitive_layer_count(ModuleVariant(Style.V4)),
            primitive_layer_count(ModuleVariant(Style.V4, False))) != (6, 2, 1):
        problems.append("primitive layer counts")
    if module_layer_count(ModuleVariant(Style.V4)) - module_layer_count(ModuleVariant(Style.V4_LIGHT)) != 2:
        problems.append("lightweight layer count")

    x = create((2, 6, 7, 16), ElementType.FP32, SeededUniform(seed))
    v4 = ModuleVariant(Style.V4)
    cfg = DcnConfig(3, 2, 16)
    p4 = init_params(cfg, v4, seed, branch_init="uniform")
    fused, unfused = branch_forward(x, p4, v4), unfused_branch_forward(x, p4, v4)
    if not (np.array_equal(fused[0], unfused[0]) and np.array_equal(fused[1], unfused[1])):
        problems.append("fused and unfused branch outputs differ")

    v3 = ModuleVariant(Style.V3)
    cfg3 = DcnConfig(3, 2, 16, softmax_weights=True)
    p3 = init_params(cfg3, v3, seed, branch_init="zeros")
    off, w = branch_forward(x, p3, v3)
    value = linear(x.as_fp32().astype(np.float64), p3.input_proj_w, p3.input_proj_b)
    err = max_rel_error(dcn_forward_arrays(value, off, w, cfg3), box_filter(value, 3))
    if err > 1e-6:
        problems.append(f"zero-init v3 differs from box filter by {err:.3e}")
    return SuiteResult("ledger", not problems, err, 1, None if not problems else seed, "; ".join(problems))


def roofline_suite() -> SuiteResult:
    problems = []
    r = roofline(56, 56, 128, 8, 9)
    if (r.flops, r.mac_ideal_elems, r.mac_worst_elems) != (14_450_688, 1_480_192, 25_690_112):
        problems.append("closed forms")
    if r.intensity_worst_exact != Fraction(9, 16) or round(r.intensity_worst, 1) != 0.6:
        problems.append("worst-case intensity")
    if math.floor(r.intensity_ideal * 10) / 10 != 9.7:
        problems.append("ideal intensity")
    q = roofline(56, 56, 128, 128 // 16, 9)
    if Fraction(q.mac_ideal_elems, 56 * 56 * 128) != Fraction(59, 16):
        problems.append("3.6875 HWC ideal MAC")
    if not (r.intensity_worst < 1 < r.intensity_ideal):
        problems.append("memory-bound regime")
    return SuiteResult("roofline", not problems, 0.0, 1, None, "; ".join(problems))


SUITES = ("equivalence", "counters", "gradcheck", "degeneration", "convexity", "ledger", "roofline")


def run_verify(seed: int = 7, cases: int = 1000, grad_instances: int = 20, fd_step: float = 1e-3,
               probes: int = 10000, attention_instances: int = 100, tol_fp32: float = 1e-5,
               tol_fp16: float = 2e-2, tol_grad: float = 1e-3, inject_fault: bool = False,
               only: Optional[List[str]] = None,
               progress: Optional[Callable[[str], None]] = None) -> VerifyReport:
    report = VerifyReport(seed)
    wanted = set(only or SUITES)
    unknown = sorted(wanted - set(SUITES))
    if unknown:
        raise ConfigError(f"unknown suite(s) {unknown}; expected some of {list(SUITES)}")
    steps = {
        "equivalence": lambda: equivalence_suite(seed, cases, tol_fp32, tol_fp16, inject_fault=inject_fault),
        "counters": lambda: [counters_suite(seed)],
        "gradcheck": lambda: gradcheck_suite(seed, grad_instances, fd_step, tol_grad),
        "degeneration": lambda: degeneration_suite(seed, attention_instances),
        "convexity": lambda: convexity_suite(seed, probes),
        "ledger": lambda: [ledger_suite(seed)],
        "roofline": lambda: [roofline_suite()],
    }
    for name in SUITES:
        if name not in wanted:
            continue
        log.info("suite %s", name)
        for res in steps[name]():
            report.suites.append(res)
            if progress is not None:
                progress(res.line())
    return report
