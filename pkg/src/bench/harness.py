# src/bench/harness.py
"""
Timing harness and operator registry for the benchmark command.

CSV schema (header always written, one row per BenchRecord):

  op, n, h, w, c, groups, dtype, stage, reps, median_us, p10_us, p90_us,
  checksum, warmup, flag

`stage` is empty for plain operator rows. `flag` is empty, "anomaly"
(p90 above anomaly_ratio x median) or "oom" (attention above its token
limit, not timed).
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..baselines.attention import MAX_TOKENS, AttentionInputs, attention_forward
from ..baselines.dwconv import DwKernel, dwconv_forward
from ..core.fields import DcnConfig, offset_shape, weight_shape
from ..core.optimized import dcn_forward_opt
from ..core.plan import KernelPlan, Stage, default_plan
from ..core.reference import dcn_forward_ref
from ..errors import ConfigError
from ..module.dcn_module import module_forward
from ..module.params import ModuleVariant, Style, init_params
from ..tensor.nhwc import ElementType, SeededUniform, TensorNHWC, create

log = logging.getLogger(__name__)

MIN_REPS = 10
MIN_WARMUP = 3
DEFAULT_GROUP_DIM = 32
DWCONV_KERNEL = 7

CSV_COLUMNS = [
    "op", "n", "h", "w", "c", "groups", "dtype", "stage", "reps",
    "median_us", "p10_us", "p90_us", "checksum", "warmup", "flag",
]

Shape4 = Tuple[int, int, int, int]


@dataclass(frozen=True)
class BenchRecord:
    op: str
    n: int
    h: int
    w: int
    c: int
    groups: int
    dtype: str
    stage: str
    reps: int
    median_us: float
    p10_us: float
    p90_us: float
    checksum: float
    warmup: int = MIN_WARMUP
    flag: str = ""

    def __post_init__(self):
        if self.flag != "oom":
            if not (self.p10_us <= self.median_us <= self.p90_us):
                raise ValueError(f"percentiles out of order: {self.p10_us}, {self.median_us}, {self.p90_us}")
            if self.reps < MIN_REPS or self.warmup < MIN_WARMUP:
                raise ValueError(f"need reps >= {MIN_REPS} and warmup >= {MIN_WARMUP}, got {self.reps}/{self.warmup}")

    @property
    def shape(self) -> Shape4:
        return self.n, self.h, self.w, self.c


@dataclass(frozen=True)
class ShapeGrid:
    name: str
    batch: int
    shapes: Tuple[Tuple[int, int, int], ...]   # (H, W, C)

    def cells(self) -> Iterator[Shape4]:
        for h, w, c in self.shapes:
            yield self.batch, h, w, c


GRIDS: Dict[str, ShapeGrid] = {
    "standard": ShapeGrid("standard", 64, ((56, 56, 128), (28, 28, 256), (14, 14, 512), (7, 7, 1024), (14, 14, 768))),
    "highres": ShapeGrid("highres", 1, ((200, 320, 128), (100, 160, 256), (50, 80, 512), (25, 40, 1024), (64, 64, 768))),
}


def parse_shape(text: str) -> Shape4:
    """'64x56x56x128' -> (64, 56, 56, 128)."""
    parts = str(text).lower().split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"bad shape {text!r}; expected NxHxWxC") from None
    if len(dims) != 4 or min(dims) < 1:
        raise ConfigError(f"bad shape {text!r}; expected NxHxWxC with positive dims")
    return dims  # type: ignore[return-value]


def grid_cells(name: str) -> List[Shape4]:
    if name not in GRIDS:
        raise ConfigError(f"unknown grid {name!r}; expected one of {sorted(GRIDS)}")
    return list(GRIDS[name].cells())


def default_groups(c: int, group_dim: int = DEFAULT_GROUP_DIM) -> int:
    return max(1, c // group_dim)


def checksum(y: Union[TensorNHWC, np.ndarray]) -> float:
    arr = y.as_fp32() if isinstance(y, TensorNHWC) else np.asarray(y, dtype=np.float32)
    return float(np.sum(arr, dtype=np.float32))


def time_call(fn: Callable[[], object], reps: int, warmup: int) -> Tuple[np.ndarray, object]:
    """Run fn warmup times untimed, then reps times under perf_counter. Returns (samples in us, last output)."""
    out = None
    for _ in range(warmup):
        out = fn()
    samples = np.empty(reps, dtype=np.float64)
    for i in range(reps):
        t0 = time.perf_counter()
        out = fn()
        samples[i] = (time.perf_counter() - t0) * 1e6
    return samples, out


# --- operator registry ------------------------------------------------------

@dataclass(frozen=True)
class OpCase:
    """Everything an operator needs to build its inputs for one cell."""
    shape: Shape4
    groups: int
    dtype: ElementType
    kernel_k: int = 3
    seed: int = 0
    d_prime: int = 8
    stage: Optional[Stage] = None
    ln_eps: float = 1e-6


def _dcn_inputs(case: OpCase, softmax: bool):
    n, h, w, c = case.shape
    cfg = DcnConfig(case.kernel_k, case.groups, c, softmax_weights=softmax)
    rng = np.random.default_rng(case.seed)
    x = create(case.shape, case.dtype, SeededUniform(case.seed))
    off = rng.uniform(-2.0, 2.0, size=offset_shape(n, h, w, cfg)).astype(np.float32)
    wt = rng.uniform(-1.0, 1.0, size=weight_shape(n, h, w, cfg)).astype(np.float32)
    return x, off, wt, cfg


def _op_dcn_ref(case: OpCase):
    x, off, w, cfg = _dcn_inputs(case, softmax=False)
    return lambda: dcn_forward_ref(x, off, w, cfg)


def _op_dcn_v3(case: OpCase):
    x, off, w, cfg = _dcn_inputs(case, softmax=True)
    return lambda: dcn_forward_ref(x, off, w, cfg)


def _op_dcn_opt(case: OpCase):
    x, off, w, cfg = _dcn_inputs(case, softmax=False)
    if case.stage is not None:
        plan = KernelPlan.for_stage(case.stage, case.d_prime)
    else:
        plan = default_plan(cfg, case.dtype, case.d_prime)
    plan.validate(cfg)
    return lambda: dcn_forward_opt(x, off, w, cfg, plan)


def _dwconv(case: OpCase, softmax: bool):
    c = case.shape[3]
    x = create(case.shape, case.dtype, SeededUniform(case.seed))
    taps = np.random.default_rng(case.seed + 1).uniform(-1.0, 1.0, size=(DWCONV_KERNEL, DWCONV_KERNEL, c))
    kern = DwKernel(taps.astype(np.float32), softmax_normalized=softmax)
    return lambda: dwconv_forward(x, kern)


def _op_attention(case: OpCase):
    """Global attention per image with one head per group."""
    n, h, w, c = case.shape
    x = create(case.shape, case.dtype, SeededUniform(case.seed)).as_fp32()
    d = c // case.groups
    heads = x.reshape(n, h * w, case.groups, d).transpose(0, 2, 1, 3)

    def run():
        out = np.empty_like(heads)
        for i in range(n):
            for g in range(case.groups):
                t = heads[i, g]
                out[i, g] = attention_forward(AttentionInputs(t, t, t))
        return out
    return run


def _module(style: Style):
    def build(case: OpCase):
        c = case.shape[3]
        variant = ModuleVariant(style)
        cfg = DcnConfig(case.kernel_k, case.groups, c, softmax_weights=variant.softmax_weights)
        params = init_params(cfg, variant, seed=case.seed, branch_init="uniform")
        x = create(case.shape, case.dtype, SeededUniform(case.seed))
        plan = None if style is Style.V3 else default_plan(cfg, case.dtype, case.d_prime)
        return lambda: module_forward(x, params, variant, plan, ln_eps=case.ln_eps)
    return build


OPERATORS: Dict[str, Callable[[OpCase], Callable[[], object]]] = {
    "dcn-ref": _op_dcn_ref,
    "dcn-opt": _op_dcn_opt,
    "dcn-v3": _op_dcn_v3,
    "dwconv": lambda case: _dwconv(case, softmax=False),
    "dwconv-softmax": lambda case: _dwconv(case, softmax=True),
    "attention": _op_attention,
    "module-v3": _module(Style.V3),
    "module-v4": _module(Style.V4),
    "module-v4-light": _module(Style.V4_LIGHT),
}


def parse_ops(text: str) -> List[str]:
    ops = [o.strip() for o in str(text).split(",") if o.strip()]
    unknown = [o for o in ops if o not in OPERATORS]
    if not ops or unknown:
        raise ConfigError(f"unknown operator(s) {unknown or text!r}; expected some of {sorted(OPERATORS)}")
    return ops


def run_cell(op: str, case: OpCase, reps: int = MIN_REPS, warmup: int = MIN_WARMUP,
             anomaly_ratio: float = 10.0, stage_tag: str = "",
             max_tokens: int = MAX_TOKENS) -> BenchRecord:
    """Time one (operator, shape, dtype) cell."""
    if reps < MIN_REPS or warmup < MIN_WARMUP:
        raise ConfigError(f"need reps >= {MIN_REPS} and warmup >= {MIN_WARMUP}, got {reps}/{warmup}")
    if op not in OPERATORS:
        raise ConfigError(f"unknown operator {op!r}")
    n, h, w, c = case.shape
    if case.stage is not None and not stage_tag:
        stage_tag = case.stage.value
    base = dict(op=op, n=n, h=h, w=w, c=c, groups=case.groups, dtype=case.dtype.tag,
                stage=stage_tag, reps=reps, warmup=warmup)

    if op == "attention" and h * w > max_tokens:
        log.warning("attention skipped at %s: %d tokens > %d", case.shape, h * w, max_tokens)
        nan = float("nan")
        return BenchRecord(**base, median_us=nan, p10_us=nan, p90_us=nan, checksum=nan, flag="oom")

    fn = OPERATORS[op](case)
    samples, out = time_call(fn, reps, warmup)
    p10, med, p90 = (float(v) for v in np.percentile(samples, [10, 50, 90]))
    flag = ""
    if p90 > anomaly_ratio * med:
        flag = "anomaly"
        log.warning("timing anomaly for %s at %s: p90=%.1fus median=%.1fus", op, case.shape, p90, med)
    log.info("%s %s %s median=%.1fus", op, case.shape, case.dtype.tag, med)
    return BenchRecord(**base, median_us=med, p10_us=p10, p90_us=p90, checksum=checksum(out), flag=flag)


# --- CSV --------------------------------------------------------------------

def records_frame(records: Sequence[BenchRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in records], columns=CSV_COLUMNS)


def write_csv(records: Sequence[BenchRecord], path: Optional[Union[str, Path]] = None) -> str:
    """Write to path when given; always return the CSV text."""
    text = records_frame(records).to_csv(index=False, na_rep="nan")
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_csv(path: Union[str, Path]) -> List[BenchRecord]:
    df = pd.read_csv(path, dtype={"op": str, "dtype": str, "stage": str, "flag": str},
                     keep_default_na=False, float_precision="round_trip", na_values={c: ["nan", "NaN"] for c in
                                                       ("median_us", "p10_us", "p90_us", "checksum")})
    missing = [c for c in CSV_COLUMNS if c not in df.columns]
    if missing:
        raise ConfigError(f"{path}: missing columns {missing}")
    ints = {"n", "h", "w", "c", "groups", "reps", "warmup"}
    floats = {"median_us", "p10_us", "p90_us", "checksum"}
    out = []
    for row in df[CSV_COLUMNS].to_dict(orient="records"):
        kw = {}
        for f in fields(BenchRecord):
            v = row[f.name]
            kw[f.name] = int(v) if f.name in ints else float(v) if f.name in floats else str(v)
        out.append(BenchRecord(**kw))
    return out
