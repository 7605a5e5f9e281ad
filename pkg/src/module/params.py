# src/module/params.py
"""
Parameters of the full deformable module and their closed-form counts.

Branch structure per style:
  v3              dw k x k -> LN -> GELU -> linear C->2GK (offsets)
                                          -> linear C->GK  (logits, softmax over K)
  v4              [dw k x k] -> one linear C->3GK, split [2GK offsets | GK weights]
  v4-lightweight  v4 branch without the input/output 1x1 projections
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import yaml

from ..errors import ConfigError, DimensionError
from ..tensor.fixture import read_fixture, write_fixture
from ..tensor.nhwc import ElementType, from_array
from ..core.fields import DcnConfig
from .layers import he_uniform


class Style(str, Enum):
    V3 = "v3"
    V4 = "v4"
    V4_LIGHT = "v4-lightweight"

    @classmethod
    def parse(cls, text: str) -> "Style":
        t = str(text).strip().lower()
        if t in ("v4-light", "v4light", "lightweight"):
            return cls.V4_LIGHT
        return cls(t)


@dataclass(frozen=True)
class ModuleVariant:
    style: Style = Style.V4
    use_dw_conv: bool = True

    def __post_init__(self):
        if self.style is Style.V3 and not self.use_dw_conv:
            raise ConfigError("the v3 branch always starts with a depthwise conv")

    @property
    def has_projections(self) -> bool:
        return self.style is not Style.V4_LIGHT

    @property
    def softmax_weights(self) -> bool:
        return self.style is Style.V3

    @property
    def label(self) -> str:
        return self.style.value if self.use_dw_conv else f"{self.style.value}-nodw"


@dataclass
class ModuleParams:
    cfg: DcnConfig
    input_proj_w: Optional[np.ndarray] = None   # (C, C)
    input_proj_b: Optional[np.ndarray] = None   # (C,)
    output_proj_w: Optional[np.ndarray] = None
    output_proj_b: Optional[np.ndarray] = None
    dw_w: Optional[np.ndarray] = None           # (k, k, C)
    ln_scale: Optional[np.ndarray] = None       # (C,)  v3
    ln_shift: Optional[np.ndarray] = None
    offset_w: Optional[np.ndarray] = None       # (C, 2GK)  v3
    offset_b: Optional[np.ndarray] = None
    weight_w: Optional[np.ndarray] = None       # (C, GK)  v3
    weight_b: Optional[np.ndarray] = None
    fused_w: Optional[np.ndarray] = None        # (C, 3GK)  v4
    fused_b: Optional[np.ndarray] = None

    def tensors(self) -> Dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if f.name != "cfg" and getattr(self, f.name) is not None}

    def count(self) -> int:
        return int(sum(a.size for a in self.tensors().values()))


def expected_shapes(cfg: DcnConfig, variant: ModuleVariant) -> Dict[str, tuple]:
    C, GK, k = cfg.channels, cfg.groups * cfg.points, cfg.kernel_k
    shapes: Dict[str, tuple] = {}
    if variant.has_projections:
        shapes.update(input_proj_w=(C, C), input_proj_b=(C,), output_proj_w=(C, C), output_proj_b=(C,))
    if variant.use_dw_conv:
        shapes["dw_w"] = (k, k, C)
    if variant.style is Style.V3:
        shapes.update(ln_scale=(C,), ln_shift=(C,), offset_w=(C, 2 * GK), offset_b=(2 * GK,),
                      weight_w=(C, GK), weight_b=(GK,))
    else:
        shapes.update(fused_w=(C, 3 * GK), fused_b=(3 * GK,))
    return shapes


def check_params(params: ModuleParams, variant: ModuleVariant) -> None:
    want = expected_shapes(params.cfg, variant)
    have = {k: tuple(v.shape) for k, v in params.tensors().items()}
    missing = sorted(set(want) - set(have))
    extra = sorted(set(have) - set(want))
    if missing or extra:
        raise ConfigError(f"params do not match variant {variant.label}: missing={missing} unexpected={extra}")
    for name, shape in want.items():
        if have[name] != shape:
            raise DimensionError(name, shape, have[name])


def param_count(C: int, G: int, K: int, variant: ModuleVariant) -> int:
    """Closed form; K is the number of sampling points (k*k)."""
    n = 0
    if variant.has_projections:
        n += 2 * (C * C + C)
    if variant.use_dw_conv:
        n += K * C
    if variant.style is Style.V3:
        n += 2 * C                       # layer norm scale + shift
        n += C * 2 * G * K + 2 * G * K   # offsets
        n += C * G * K + G * K           # weight logits
    else:
        n += C * 3 * G * K + 3 * G * K
    return n


def primitive_layer_count(variant: ModuleVariant) -> int:
    """Primitive layers in the offset/weight branch (a fused linear counts once)."""
    if variant.style is Style.V3:
        return 6  # dw, LN, GELU, linear, linear, softmax
    return 2 if variant.use_dw_conv else 1


def module_layer_count(variant: ModuleVariant) -> int:
    return primitive_layer_count(variant) + (2 if variant.has_projections else 0)


def init_params(cfg: DcnConfig, variant: ModuleVariant, seed: int = 0, branch_init: str = "zeros",
                branch_scale: float = 0.1) -> ModuleParams:
    """
    He-uniform projections and depthwise taps, unit/zero layer norm.
    branch_init="zeros" puts every final branch linear at zero, so offsets
    start on the regular grid; "uniform" draws them in +-branch_scale.
    """
    if branch_init not in ("zeros", "uniform"):
        raise ConfigError(f"branch_init must be 'zeros' or 'uniform', got {branch_init!r}")
    rng = np.random.default_rng(seed)
    C, k = cfg.channels, cfg.kernel_k
    p = ModuleParams(cfg=cfg)
    if variant.has_projections:
        p.input_proj_w = he_uniform(rng, (C, C), C)
        p.input_proj_b = np.zeros(C, dtype=np.float32)
        p.output_proj_w = he_uniform(rng, (C, C), C)
        p.output_proj_b = np.zeros(C, dtype=np.float32)
    if variant.use_dw_conv:
        p.dw_w = he_uniform(rng, (k, k, C), k * k)
    if variant.style is Style.V3:
        p.ln_scale = np.ones(C, dtype=np.float32)
        p.ln_shift = np.zeros(C, dtype=np.float32)

    def final(shape):
        if branch_init == "zeros":
            return np.zeros(shape, dtype=np.float32)
        return rng.uniform(-branch_scale, branch_scale, size=shape).astype(np.float32)

    GK = cfg.groups * cfg.points
    if variant.style is Style.V3:
        p.offset_w, p.offset_b = final((C, 2 * GK)), final((2 * GK,))
        p.weight_w, p.weight_b = final((C, GK)), final((GK,))
    else:
        p.fused_w, p.fused_b = final((C, 3 * GK)), final((3 * GK,))
    return p


MANIFEST = "manifest.yaml"


def save_params(params: ModuleParams, variant: ModuleVariant, out_dir: Union[str, Path]) -> Path:
    """One DCNT file per tensor (stored as (1, 1, rows, cols)) plus a YAML manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = {}
    for name, arr in params.tensors().items():
        flat = np.asarray(arr, dtype=np.float32)
        as4d = flat.reshape(1, 1, -1, flat.shape[-1]) if flat.ndim > 1 else flat.reshape(1, 1, 1, -1)
        write_fixture(from_array(as4d, ElementType.FP32), out / f"{name}.dcnt")
        entries[name] = {"file": f"{name}.dcnt", "shape": list(flat.shape)}
    manifest = {
        "variant": variant.style.value,
        "use_dw_conv": variant.use_dw_conv,
        "channels": params.cfg.channels,
        "groups": params.cfg.groups,
        "kernel_k": params.cfg.kernel_k,
        "offset_scale": params.cfg.offset_scale,
        "tensors": entries,
    }
    with open(out / MANIFEST, "w", encoding="utf-8") as f:
        yaml.safe_dump(manifest, f, sort_keys=True)
    return out / MANIFEST


def load_params(in_dir: Union[str, Path]):
    src = Path(in_dir)
    with open(src / MANIFEST, "r", encoding="utf-8") as f:
        manifest = yaml.safe_load(f)
    variant = ModuleVariant(Style.parse(manifest["variant"]), bool(manifest["use_dw_conv"]))
    cfg = DcnConfig(int(manifest["kernel_k"]), int(manifest["groups"]), int(manifest["channels"]),
                    variant.softmax_weights, float(manifest.get("offset_scale", 1.0)))
    p = ModuleParams(cfg=cfg)
    for name, entry in manifest["tensors"].items():
        t = read_fixture(src / entry["file"])
        setattr(p, name, t.as_fp32().reshape(entry["shape"]).copy())
    check_params(p, variant)
    return p, variant
