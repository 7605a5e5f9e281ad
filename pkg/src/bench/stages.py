# src/bench/stages.py
"""
Runtime ablation: the optimized kernel at every rung of the plan ladder,
the reference kernel it replaces, and the full v3 / v4 modules.

Rows carry their scope in the stage column: "kernel:<tag>" or
"module:<variant>".
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from ..core.plan import LADDER, Stage
from ..tensor.nhwc import ElementType
from .harness import BenchRecord, OpCase, Shape4, run_cell

log = logging.getLogger(__name__)

ABLATION_SHAPE: Shape4 = (64, 56, 56, 128)
ABLATION_GROUPS = 4
NOISE = 0.05
MIN_SPEEDUP = 1.5  # final kernel stage over the reference kernel


def run_stage(stage: Stage, shape: Shape4 = ABLATION_SHAPE, groups: int = ABLATION_GROUPS,
              kernel_k: int = 3, d_prime: int = 8, seed: int = 0, reps: int = 10,
              warmup: int = 3) -> BenchRecord:
    """Time the optimized kernel with every optimization up to `stage` enabled."""
    dtype = ElementType.FP16 if stage is Stage.FP16 else ElementType.FP32
    case = OpCase(shape, groups, dtype, kernel_k, seed, d_prime, stage)
    return run_cell("dcn-opt", case, reps, warmup, stage_tag=f"kernel:{stage.value}")


@dataclass
class AblationSummary:
    records: List[BenchRecord]
    slowdowns: List[str] = field(default_factory=list)
    speedup: Optional[float] = None   # reference median / final stage median
    min_speedup: float = MIN_SPEEDUP

    @property
    def passed(self) -> bool:
        """False when the final stage misses the required speedup over the reference."""
        return self.speedup is None or self.speedup >= self.min_speedup

    def lines(self) -> List[str]:
        out = [f"{r.stage:<24} median={r.median_us:>12.1f}us" for r in self.records]
        out += [f"WARNING {s}" for s in self.slowdowns]
        if self.speedup is not None:
            verdict = "ok" if self.passed else f"FAILED, need >= {self.min_speedup:.2f}x"
            out.append(f"final stage speedup over reference: {self.speedup:.2f}x ({verdict})")
        return out


def summarize(records: List[BenchRecord], noise: float = NOISE, min_speedup: float = MIN_SPEEDUP) -> AblationSummary:
    """
    Flag kernel stages slower than their predecessor by more than `noise`,
    and fail the summary when the last stage is not `min_speedup` times
    faster than the reference kernel.
    """
    summary = AblationSummary(records, min_speedup=min_speedup)
    kernel = [r for r in records if r.stage.startswith("kernel:") and r.stage != "kernel:reference"]
    for prev, cur in zip(kernel, kernel[1:]):
        if cur.median_us > prev.median_us * (1.0 + noise):
            summary.slowdowns.append(
                f"{cur.stage} is {cur.median_us / prev.median_us:.2f}x the time of {prev.stage}"
            )
    ref = next((r for r in records if r.stage == "kernel:reference"), None)
    if ref is not None and kernel:
        summary.speedup = ref.median_us / kernel[-1].median_us
        if not summary.passed:
            log.warning("final stage %s is only %.2fx faster than the reference", kernel[-1].stage, summary.speedup)
    return summary


def run_ablation(shape: Shape4 = ABLATION_SHAPE, groups: int = ABLATION_GROUPS, kernel_k: int = 3,
                 d_prime: int = 8, seed: int = 0, reps: int = 10, warmup: int = 3,
                 with_modules: bool = True, stages: Sequence[Stage] = tuple(LADDER),
                 ln_eps: float = 1e-6) -> AblationSummary:
    records: List[BenchRecord] = []
    ref_case = OpCase(shape, groups, ElementType.FP32, kernel_k, seed, d_prime, ln_eps=ln_eps)
    records.append(run_cell("dcn-ref", ref_case, reps, warmup, stage_tag="kernel:reference"))
    for stage in stages:
        log.info("ablation stage %s", stage.value)
        records.append(run_stage(stage, shape, groups, kernel_k, d_prime, seed, reps, warmup))
    if with_modules:
        for op, label in (("module-v3", "v3"), ("module-v4", "v4")):
            records.append(run_cell(op, ref_case, reps, warmup, stage_tag=f"module:{label}"))
    return summarize(records)
