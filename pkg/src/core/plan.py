# src/core/plan.py
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import List

from ..errors import PlanError
from ..tensor.nhwc import ElementType
from .fields import DcnConfig

LANE_BYTES = 16  # one 128-bit packed load


class Stage(str, Enum):
    BASELINE = "baseline"
    WORKLOAD_ELIM = "+workload-elim"
    COEFF_REUSE = "+coeff-reuse"
    VECTOR_LANES = "+vector-lanes"
    FP16 = "+fp16"

    @classmethod
    def parse(cls, text: str) -> "Stage":
        t = str(text).strip()
        for s in cls:
            if t in (s.value, s.value.lstrip("+"), s.name.lower()):
                return s
        raise ValueError(f"unknown stage {text!r}; expected one of {[s.value for s in cls]}")


LADDER: List[Stage] = list(Stage)


@dataclass(frozen=True)
class KernelPlan:
    """
    How the optimized kernel walks the data.

    d_prime             channels handled per work item
    amortize_reads      read offsets/weights once per (location, group, point)
                        instead of once per channel
    reuse_coefficients  compute the 4 bilinear weights once per sample point
    use_vector_lanes    load/store d_prime contiguous channels at once
    dtype               storage type of the input and output
    """
    d_prime: int = 8
    use_vector_lanes: bool = True
    reuse_coefficients: bool = True
    amortize_reads: bool = True
    dtype: ElementType = ElementType.FP32
    stage_tag: Stage = Stage.VECTOR_LANES

    def validate(self, cfg: DcnConfig) -> None:
        if self.d_prime < 1:
            raise PlanError(f"d_prime must be >= 1, got {self.d_prime}")
        if cfg.group_dim % self.d_prime:
            raise PlanError(f"d_prime {self.d_prime} does not divide group dim {cfg.group_dim}")
        if self.reuse_coefficients and not self.amortize_reads:
            raise PlanError("reuse_coefficients requires amortize_reads")
        if self.use_vector_lanes and (self.d_prime * self.dtype.bytes_per_element) % LANE_BYTES:
            raise PlanError(
                f"vector lanes need d_prime*{self.dtype.bytes_per_element} bytes to be a multiple of {LANE_BYTES}, "
                f"got d_prime={self.d_prime}"
            )

    @classmethod
    def for_stage(cls, stage: Stage, d_prime: int = 8) -> "KernelPlan":
        """Enable every optimization up to and including `stage`."""
        rank = LADDER.index(stage)
        return cls(
            d_prime=1 if stage is Stage.BASELINE else d_prime,
            amortize_reads=rank >= LADDER.index(Stage.WORKLOAD_ELIM),
            reuse_coefficients=rank >= LADDER.index(Stage.COEFF_REUSE),
            use_vector_lanes=rank >= LADDER.index(Stage.VECTOR_LANES),
            dtype=ElementType.FP16 if stage is Stage.FP16 else ElementType.FP32,
            stage_tag=stage,
        )


def default_plan(cfg: DcnConfig, dtype: ElementType = ElementType.FP32, d_prime: int = 8) -> KernelPlan:
    """
    Fastest valid plan for cfg: vector lanes with the requested d_prime
    when it fits, else the nearest lane width that divides the group dim,
    else scalar loads with reused coefficients.
    """
    stage = Stage.FP16 if dtype is ElementType.FP16 else Stage.VECTOR_LANES
    lane = LANE_BYTES // dtype.bytes_per_element
    candidates = [d_prime] + [d for d in (8, 16, 4, 32, 64) if d != d_prime]
    for d in candidates:
        plan = replace(KernelPlan.for_stage(stage, d), dtype=dtype)
        if d % lane == 0 and cfg.group_dim % d == 0:
            return plan
    d = max(d for d in range(1, min(d_prime, cfg.group_dim) + 1) if cfg.group_dim % d == 0)
    return replace(KernelPlan.for_stage(Stage.COEFF_REUSE, d), dtype=dtype)
