import math

import numpy as np
import pytest

from src.core.fields import DcnConfig
from src.core.reference import (
    dcn_backward_ref,
    dcn_forward_arrays,
    dcn_forward_ref,
    sample_points,
    softmax_k,
)
from src.core.sampling import bilinear_sample
from src.errors import ConfigError, DimensionError
from src.tensor.nhwc import ElementType, SeededUniform, Zeros, create, from_array

from conftest import max_rel


def test_softmax_examples():
    np.testing.assert_allclose(softmax_k(np.zeros(9)), np.full(9, 1 / 9))
    big = softmax_k(np.array([1000.0] + [0.0] * 8))
    assert np.isfinite(big).all() and big[0] == pytest.approx(1.0) and big[1:].max() < 1e-300
    np.testing.assert_allclose(softmax_k(np.array([1.0, 2.0, 3.0])),
                               [0.09003057, 0.24472847, 0.66524096], rtol=1e-6)


def test_bilinear_sample_examples():
    x = create((1, 3, 4, 2), ElementType.FP32, SeededUniform(3))
    assert bilinear_sample(x, 0, 1, 0, (1.0, 2.0), 1) == pytest.approx(float(x.as_fp32()[0, 1, 2, 1]))
    plane = from_array(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32).reshape(1, 2, 2, 1))
    assert bilinear_sample(plane, 0, 0, 0, (0.5, 0.5), 1) == pytest.approx(2.5)
    assert bilinear_sample(plane, 0, 0, 0, (-5.0, -5.0), 1) == 0.0
    assert math.isnan(bilinear_sample(plane, 0, 0, 0, (float("nan"), 0.0), 1))


def test_bilinear_sample_half_outside_reads_zero():
    plane = from_array(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32).reshape(1, 2, 2, 1))
    # halfway between row -1 (padding) and row 0
    assert bilinear_sample(plane, 0, 0, 0, (-0.5, 0.0), 1) == pytest.approx(0.5)


def test_grid_is_row_major_dy_outer():
    cfg = DcnConfig(3, 1, 1)
    assert cfg.grid()[:4] == [(-1, -1), (-1, 0), (-1, 1), (0, -1)]
    off = np.zeros((1, 2, 2, 1, 9, 2), dtype=np.float32)
    py, px = sample_points(off, cfg)
    assert (py[0, 1, 1, 0, 0], px[0, 1, 1, 0, 0]) == (0.0, 0.0)
    assert (py[0, 0, 0, 0, 8], px[0, 0, 0, 0, 8]) == (1.0, 1.0)


def test_identity_configuration_reproduces_input():
    x = create((2, 3, 4, 6), ElementType.FP32, SeededUniform(1))
    cfg = DcnConfig(1, 3, 6)
    off = np.zeros((2, 3, 4, 3, 1, 2), dtype=np.float32)
    w = np.ones((2, 3, 4, 3, 1), dtype=np.float32)
    assert dcn_forward_ref(x, off, w, cfg) == x


def test_zero_input_gives_zero_output(seeded_case):
    _, off, w, cfg = seeded_case()
    x = create((1, 4, 4, 16), ElementType.FP32, Zeros())
    assert np.all(dcn_forward_ref(x, off, w, cfg).as_fp32() == 0.0)


@pytest.mark.parametrize("softmax", [False, True])
def test_seeded_case_matches_scalar_oracle(seeded_case, oracle, softmax):
    x, off, w, cfg = seeded_case(softmax)
    y = dcn_forward_ref(x, off, w, cfg)
    want = oracle.dcn_forward(x.as_fp32(), off, w, groups=2, k=3, softmax=softmax)
    assert max_rel(y.as_fp32(), want) <= 1e-5


def test_offset_scale_is_applied(oracle):
    cfg = DcnConfig(3, 1, 4, offset_scale=0.5)
    x = create((1, 5, 5, 4), ElementType.FP32, SeededUniform(2))
    rng = np.random.default_rng(0)
    off = rng.uniform(-2, 2, size=(1, 5, 5, 1, 9, 2)).astype(np.float32)
    w = rng.uniform(-1, 1, size=(1, 5, 5, 1, 9)).astype(np.float32)
    want = oracle.dcn_forward(x.as_fp32(), off, w, groups=1, k=3, offset_scale=0.5)
    assert max_rel(dcn_forward_ref(x, off, w, cfg).as_fp32(), want) <= 1e-5


@pytest.mark.parametrize("softmax", [False, True])
def test_seeded_case_matches_frozen_oracle_golden(seeded_case, oracle, frozen_golden, softmax):
    x, off, w, cfg = seeded_case(softmax)
    name = "oracle_seeded_k3_g2_softmax_y.dcnt" if softmax else "oracle_seeded_k3_g2_y.dcnt"
    golden = frozen_golden(name, lambda: oracle.dcn_forward(x.as_fp32(), off, w, groups=2, k=3, softmax=softmax))
    assert golden.shape == (1, 4, 4, 16)
    assert max_rel(dcn_forward_ref(x, off, w, cfg).as_fp32(), golden.as_fp32()) <= 1e-5


@pytest.mark.parametrize("softmax", [False, True])
def test_forward_is_linear_in_x(seeded_case, softmax):
    x, off, w, cfg = seeded_case(softmax)
    z = create(x.shape, ElementType.FP32, SeededUniform(21)).as_fp32()
    a, b = 1.75, -0.6
    mixed = dcn_forward_arrays(a * x.as_fp32() + b * z, off, w, cfg)
    want = a * dcn_forward_arrays(x.as_fp32(), off, w, cfg) + b * dcn_forward_arrays(z, off, w, cfg)
    assert max_rel(mixed, want) <= 1e-5


def test_forward_is_linear_in_weights_without_softmax(seeded_case):
    x, off, w, cfg = seeded_case(False)
    w2 = np.random.default_rng(3).uniform(-1, 1, size=w.shape).astype(np.float32)
    a, b = -0.8, 2.5
    mixed = dcn_forward_arrays(x.as_fp32(), off, a * w + b * w2, cfg)
    want = a * dcn_forward_arrays(x.as_fp32(), off, w, cfg) + b * dcn_forward_arrays(x.as_fp32(), off, w2, cfg)
    assert max_rel(mixed, want) <= 1e-5


@pytest.mark.parametrize("k", [1, 3, 5])
def test_zero_offsets_commute_with_translation(k):
    N, H, W, C, G = 1, 9, 9, 8, 2
    r = k // 2
    cfg = DcnConfig(k, G, C)
    x = create((N, H, W, C), ElementType.FP32, SeededUniform(13)).as_fp32()
    shifted = np.zeros_like(x)
    shifted[:, 1:, 1:] = x[:, :-1, :-1]
    off = np.zeros((N, H, W, G, k * k, 2), dtype=np.float32)
    taps = np.random.default_rng(k).uniform(-1, 1, size=(G, k * k)).astype(np.float32)
    w = np.broadcast_to(taps, (N, H, W, G, k * k)).copy()
    y = dcn_forward_arrays(x, off, w, cfg)
    ys = dcn_forward_arrays(shifted, off, w, cfg)
    # outputs whose window stays clear of the dropped last row/column of x
    np.testing.assert_allclose(ys[:, 1:H - r, 1:W - r], y[:, :H - 1 - r, :W - 1 - r], rtol=1e-6, atol=1e-7)


def test_dimension_errors_name_the_axis(seeded_case):
    x, off, w, cfg = seeded_case()
    with pytest.raises(DimensionError) as err:
        dcn_forward_ref(x, off[:, :3], w, cfg)
    assert err.value.axis == "offset.H"
    with pytest.raises(DimensionError) as err:
        dcn_forward_ref(x, off, w[..., :4], cfg)
    assert err.value.axis == "weight.K"
    with pytest.raises(DimensionError) as err:
        dcn_forward_ref(x, off, w, DcnConfig(3, 2, 8))
    assert err.value.axis == "x.C"


@pytest.mark.parametrize("k,g,c", [(2, 1, 4), (3, 3, 4), (0, 1, 1)])
def test_bad_config_raises(k, g, c):
    with pytest.raises(ConfigError):
        DcnConfig(k, g, c)


def test_backward_of_zero_upstream_is_zero(seeded_case):
    x, off, w, cfg = seeded_case(True)
    gy = create(x.shape, ElementType.FP32, Zeros())
    gx, goff, gw = dcn_backward_ref(x, off, w, cfg, gy)
    assert not gx.as_fp32().any() and not goff.any() and not gw.any()


def test_backward_identity_passes_upstream_through():
    x = create((1, 3, 3, 4), ElementType.FP32, SeededUniform(4))
    gy = create((1, 3, 3, 4), ElementType.FP32, SeededUniform(5))
    cfg = DcnConfig(1, 2, 4)
    off = np.zeros((1, 3, 3, 2, 1, 2), dtype=np.float32)
    w = np.ones((1, 3, 3, 2, 1), dtype=np.float32)
    gx, _, gw = dcn_backward_ref(x, off, w, cfg, gy)
    assert gx == gy
    np.testing.assert_allclose(gw[..., 0, 0], np.sum(x.as_fp32()[..., :2] * gy.as_fp32()[..., :2], axis=-1),
                               rtol=1e-6)


def test_float64_arrays_stay_float64(seeded_case):
    x, off, w, cfg = seeded_case()
    y = dcn_forward_arrays(x.as_fp32().astype(np.float64), off.astype(np.float64), w.astype(np.float64), cfg)
    assert y.dtype == np.float64
