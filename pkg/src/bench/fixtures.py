# src/bench/fixtures.py
"""
Golden DCNT files regenerated from seeds with the reference forward.

Most cases draw offsets and weights from one numpy generator per case.
Cases with field_seeds fill every tensor through the seeded tensor
generator instead (x, offsets, weights each from their own seed), the
same recipe the test suite uses for its seeded case.

Offsets and weights are stored flattened to 4D: (N, H, W, G*K*2) and
(N, H, W, G*K). A SHA256SUMS file in the output directory lists every
file in name order.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..core.fields import DcnConfig, offset_shape, weight_shape
from ..core.reference import dcn_forward_ref
from ..tensor.fixture import write_fixture
from ..tensor.nhwc import ElementType, SeededUniform, TensorNHWC, create, from_array

log = logging.getLogger(__name__)

SUMS_FILE = "SHA256SUMS"


@dataclass(frozen=True)
class GoldenCase:
    name: str
    shape: Tuple[int, int, int, int]
    groups: int
    kernel_k: int
    softmax: bool
    seed: int
    field_seeds: Optional[Tuple[int, int]] = None   # (offsets, weights)

    @property
    def cfg(self) -> DcnConfig:
        return DcnConfig(self.kernel_k, self.groups, self.shape[3], softmax_weights=self.softmax)


GOLDEN_CASES: List[GoldenCase] = [
    GoldenCase("dcn_k3_g2", (1, 6, 6, 8), 2, 3, False, 11),
    GoldenCase("dcn_k3_g2_softmax", (1, 6, 6, 8), 2, 3, True, 12),
    GoldenCase("dcn_k1_g1", (2, 4, 5, 4), 1, 1, False, 13),
    GoldenCase("dcn_k5_g4", (1, 7, 5, 16), 4, 5, False, 14),
    GoldenCase("seeded_k3_g2", (1, 4, 4, 16), 2, 3, False, 7, field_seeds=(8, 9)),
    GoldenCase("seeded_k3_g2_softmax", (1, 4, 4, 16), 2, 3, True, 7, field_seeds=(8, 9)),
]


def _seeded_field(seed: int, shape: Tuple[int, ...], lo: float, hi: float) -> np.ndarray:
    n, h, w = shape[:3]
    flat = create((n, h, w, int(np.prod(shape[3:]))), ElementType.FP32, SeededUniform(seed, lo, hi))
    return flat.as_fp32().reshape(shape).copy()


def golden_inputs(case: GoldenCase) -> Tuple[TensorNHWC, np.ndarray, np.ndarray]:
    n, h, w, _ = case.shape
    cfg = case.cfg
    x = create(case.shape, ElementType.FP32, SeededUniform(case.seed))
    if case.field_seeds is not None:
        s_off, s_w = case.field_seeds
        return x, _seeded_field(s_off, offset_shape(n, h, w, cfg), -2.0, 2.0), \
            _seeded_field(s_w, weight_shape(n, h, w, cfg), -1.0, 1.0)
    rng = np.random.default_rng(case.seed)
    off = rng.uniform(-2.0, 2.0, size=offset_shape(n, h, w, cfg)).astype(np.float32)
    wt = rng.uniform(-1.0, 1.0, size=weight_shape(n, h, w, cfg)).astype(np.float32)
    return x, off, wt


def golden_tensors() -> Dict[str, TensorNHWC]:
    """Every golden tensor by file name, in a fixed order."""
    out: Dict[str, TensorNHWC] = {
        "create_seed42.dcnt": create((1, 4, 4, 8), ElementType.FP32, SeededUniform(42, -1.0, 1.0)),
        "fp16_one_half.dcnt": from_array(np.array([1.0, 0.5], dtype=np.float32).reshape(1, 1, 1, 2),
                                         ElementType.FP16),
    }
    for case in GOLDEN_CASES:
        n, h, w, _ = case.shape
        x, off, wt = golden_inputs(case)
        out[f"{case.name}_x.dcnt"] = x
        out[f"{case.name}_offset.dcnt"] = from_array(off.reshape(n, h, w, -1))
        out[f"{case.name}_weight.dcnt"] = from_array(wt.reshape(n, h, w, -1))
        out[f"{case.name}_y.dcnt"] = dcn_forward_ref(x, off, wt, case.cfg)
    return out


def sha256_file(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def generate(out_dir: Union[str, Path], force: bool = False) -> List[Path]:
    """
    Write every golden tensor plus SHA256SUMS. Raises FileExistsError
    when any target already exists and force is False.
    """
    out = Path(out_dir)
    tensors = golden_tensors()
    targets = [out / name for name in tensors] + [out / SUMS_FILE]
    existing = [p for p in targets if p.exists()]
    if existing and not force:
        raise FileExistsError(f"{len(existing)} fixture file(s) already in {out}; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, t in tensors.items():
        write_fixture(t, out / name)
        written.append(out / name)
    sums = "".join(f"{sha256_file(p)}  {p.name}\n" for p in sorted(written, key=lambda p: p.name))
    (out / SUMS_FILE).write_text(sums, encoding="utf-8")
    log.info("wrote %d fixtures to %s", len(written), out)
    return written + [out / SUMS_FILE]
