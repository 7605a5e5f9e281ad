# src/roofline/model.py
"""
Analytic cost of one deformable aggregation over an (H, W, C) map.

  flops      4*K*H*W*C             one 4-tap bilinear sample-and-accumulate per point and channel
  mac_ideal  2*H*W*C + 3*K*H*W*G   input + output once, offsets (2K) and weights (K) per group
  mac_worst  (4K + 3K + 1)*H*W*C   no cache: 4K bilinear reads, 3K offset/weight reads, 1 write

MAC is counted in elements; the *_bytes fields scale by element size.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable, List, Sequence, Tuple

import pandas as pd

from ..errors import ConfigError

GROUP_DIM_ASSUMED = 16


@dataclass(frozen=True)
class RooflineReport:
    H: int
    W: int
    C: int
    G: int
    K: int
    flops: int
    mac_ideal_elems: int
    mac_worst_elems: int
    intensity_ideal: float
    intensity_worst: float
    mac_ideal_bytes: int
    mac_worst_bytes: int
    group_dim_assumed: int = GROUP_DIM_ASSUMED

    @property
    def intensity_ideal_exact(self) -> Fraction:
        return Fraction(self.flops, self.mac_ideal_elems)

    @property
    def intensity_worst_exact(self) -> Fraction:
        return Fraction(self.flops, self.mac_worst_elems)


def roofline(H: int, W: int, C: int, G: int, K: int, bytes_per_element: int = 4) -> RooflineReport:
    if min(H, W, C, G, K) < 1:
        raise ConfigError(f"all of H, W, C, G, K must be >= 1, got {(H, W, C, G, K)}")
    if C % G:
        raise ConfigError(f"C={C} not divisible by G={G}")
    hwc = H * W * C
    flops = 4 * K * hwc
    mac_ideal = 2 * hwc + 3 * K * H * W * G
    mac_worst = (4 * K + 3 * K + 1) * hwc
    return RooflineReport(
        H=H, W=W, C=C, G=G, K=K,
        flops=flops,
        mac_ideal_elems=mac_ideal,
        mac_worst_elems=mac_worst,
        intensity_ideal=flops / mac_ideal,
        intensity_worst=flops / mac_worst,
        mac_ideal_bytes=mac_ideal * bytes_per_element,
        mac_worst_bytes=mac_worst * bytes_per_element,
    )


Shape3 = Tuple[int, int, int]

TABLE_COLUMNS = [
    "H", "W", "C", "G", "K", "flops", "mac_ideal_elems", "mac_worst_elems",
    "intensity_ideal", "intensity_worst", "mac_ideal_bytes", "mac_worst_bytes",
]


def intensity_frame(shapes: Sequence[Shape3], groups: int = 0, K: int = 9,
                    bytes_per_element: int = 4) -> pd.DataFrame:
    """
    One row per (H, W, C). groups=0 means G = C / 16, the group dim the
    analytic model assumes.
    """
    rows = []
    for H, W, C in shapes:
        G = groups or max(1, C // GROUP_DIM_ASSUMED)
        rows.append(asdict(roofline(H, W, C, G, K, bytes_per_element)))
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def intensity_table(shapes: Iterable[Shape3], groups: int = 0, K: int = 9, fmt: str = "text",
                    bytes_per_element: int = 4) -> str:
    """Render as aligned text or CSV; an empty shape list renders an empty string."""
    shapes: List[Shape3] = list(shapes)
    if not shapes:
        return ""
    df = intensity_frame(shapes, groups, K, bytes_per_element)
    if fmt == "csv":
        return df.to_csv(index=False)
    if fmt != "text":
        raise ConfigError(f"unknown table format {fmt!r}")
    return df.to_string(index=False, float_format=lambda v: f"{v:.4f}")
