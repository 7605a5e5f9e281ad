import io
from fractions import Fraction

import pandas as pd
import pytest

from src.bench.harness import GRIDS
from src.errors import ConfigError
from src.roofline.model import intensity_frame, intensity_table, roofline


def test_standard_shape_numbers():
    r = roofline(56, 56, 128, 8, 9)
    assert r.flops == 14_450_688
    assert r.mac_ideal_elems == 1_480_192
    assert r.mac_worst_elems == 25_690_112
    assert r.intensity_worst == 0.5625
    assert r.intensity_ideal == pytest.approx(9.7627, abs=1e-4)
    assert round(r.intensity_worst, 1) == 0.6
    assert int(r.intensity_ideal * 10) / 10 == 9.7


def test_k9_coefficients():
    hwc = 10 * 12 * 64
    r = roofline(10, 12, 64, 4, 9)
    assert r.flops == 36 * hwc
    assert r.mac_ideal_elems == 2 * hwc + 27 * 10 * 12 * 4
    assert r.mac_worst_elems == 64 * hwc


def test_group_dim_16_gives_3_6875_hwc():
    r = roofline(56, 56, 128, 128 // 16, 9)
    assert Fraction(r.mac_ideal_elems, 56 * 56 * 128) == Fraction(59, 16)
    assert r.intensity_worst < 1 < r.intensity_ideal
    assert r.intensity_ideal_exact == Fraction(r.flops, r.mac_ideal_elems)
    assert r.intensity_worst_exact == Fraction(4 * 9, 7 * 9 + 1)


def test_byte_mac_scales_with_element_size():
    r32 = roofline(7, 7, 1024, 64, 9, bytes_per_element=4)
    r16 = roofline(7, 7, 1024, 64, 9, bytes_per_element=2)
    assert r32.mac_worst_bytes == 4 * r32.mac_worst_elems
    assert r16.mac_ideal_bytes == 2 * r16.mac_ideal_elems


@pytest.mark.parametrize("args", [(56, 56, 128, 7, 9), (0, 56, 128, 8, 9), (56, 56, 128, 8, 0)])
def test_invalid_config(args):
    with pytest.raises(ConfigError):
        roofline(*args)


def test_empty_table():
    assert intensity_table([]) == ""


def test_one_shape_row_matches_roofline():
    df = intensity_frame([(56, 56, 128)], groups=8)
    r = roofline(56, 56, 128, 8, 9)
    assert len(df) == 1
    assert df.loc[0, "flops"] == r.flops
    assert df.loc[0, "mac_worst_elems"] == r.mac_worst_elems


def test_standard_grid_table_by_hand():
    shapes = list(GRIDS["standard"].shapes)
    df = pd.read_csv(io.StringIO(intensity_table(shapes, fmt="csv")))
    assert len(df) == 5
    for row, (h, w, c) in zip(df.itertuples(), shapes):
        g = c // 16
        assert row.flops == 36 * h * w * c
        assert row.mac_ideal_elems == 2 * h * w * c + 27 * h * w * g
        assert row.mac_worst_elems == 64 * h * w * c


def test_text_table_and_bad_format():
    text = intensity_table([(56, 56, 128)], groups=8)
    assert "14450688" in text and "0.5625" in text
    with pytest.raises(ConfigError):
        intensity_table([(56, 56, 128)], fmt="html")
