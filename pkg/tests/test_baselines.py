import numpy as np
import pytest

from src.baselines.attention import (
    AttentionInputs,
    attention_forward,
    attention_weights,
    degeneration_check,
    degeneration_tolerance,
    find_softmax_counterexample,
    reordered_forward,
    seeded_inputs,
    shared_projection,
)
from src.baselines.dwconv import DwKernel, box_filter, dwconv_forward, window_weighted_sum
from src.core.fields import DcnConfig
from src.core.reference import dcn_forward_arrays
from src.errors import ConfigError, DimensionError
from src.tensor.nhwc import Constant, ElementType, SeededUniform, create

from conftest import max_rel


def test_delta_taps_reproduce_input():
    x = create((1, 5, 6, 3), ElementType.FP32, SeededUniform(1))
    taps = np.zeros((3, 3, 3), dtype=np.float32)
    taps[1, 1] = 1.0
    assert dwconv_forward(x, DwKernel(taps)) == x


def test_equal_logits_softmax_taps_give_box_filter():
    x = create((2, 7, 7, 4), ElementType.FP32, SeededUniform(2))
    kern = DwKernel(np.full((7, 7, 4), 0.3, dtype=np.float32), softmax_normalized=True)
    np.testing.assert_allclose(dwconv_forward(x, kern).as_fp32(), box_filter(x.as_fp32(), 7), rtol=1e-5, atol=1e-5)


def test_softmax_taps_are_normalized():
    taps = np.random.default_rng(0).normal(0, 3, size=(7, 7, 5))
    eff = DwKernel(taps, softmax_normalized=True).effective_taps()
    np.testing.assert_allclose(eff.reshape(49, 5).sum(axis=0), 1.0, atol=1e-6)
    assert eff.min() >= 0.0 and eff.max() <= 1.0


def test_constant_input_interior_is_preserved():
    x = create((1, 9, 9, 2), ElementType.FP32, Constant(1.75))
    taps = np.random.default_rng(1).normal(size=(3, 3, 2)).astype(np.float32)
    y = dwconv_forward(x, DwKernel(taps, softmax_normalized=True)).as_fp32()
    np.testing.assert_allclose(y[:, 1:-1, 1:-1, :], 1.75, rtol=1e-6)


def test_dwconv_matches_scalar_oracle(oracle):
    x = create((1, 5, 4, 3), ElementType.FP32, SeededUniform(3))
    taps = np.random.default_rng(2).uniform(-1, 1, size=(5, 5, 3)).astype(np.float32)
    want = oracle.dwconv(x.as_fp32(), taps)
    assert max_rel(dwconv_forward(x, DwKernel(taps)).as_fp32(), want) <= 1e-5


def test_dwconv_errors():
    with pytest.raises(ConfigError):
        DwKernel(np.zeros((2, 2, 1)))
    with pytest.raises(DimensionError):
        DwKernel(np.zeros((3, 1)))
    with pytest.raises(DimensionError):
        dwconv_forward(create((1, 3, 3, 4)), DwKernel(np.zeros((3, 3, 2), np.float32)))


def test_zero_offset_dcn_is_a_window_weighted_sum():
    rng = np.random.default_rng(5)
    x = rng.uniform(-1, 1, size=(1, 5, 6, 8))
    m = rng.uniform(-1, 1, size=(1, 5, 6, 2, 9))
    cfg = DcnConfig(3, 2, 8)
    y = dcn_forward_arrays(x, np.zeros((1, 5, 6, 2, 9, 2)), m, cfg)
    np.testing.assert_allclose(y, window_weighted_sum(x, m, 3, 2), rtol=1e-12, atol=1e-12)


def test_single_token_softmax_returns_v():
    inp = seeded_inputs(0, 1, 4)
    np.testing.assert_allclose(attention_forward(inp, use_softmax=True), inp.v, rtol=1e-6)


def test_zero_queries_average_v():
    inp = seeded_inputs(1, 5, 3)
    inp = AttentionInputs(np.zeros_like(inp.q), inp.k, inp.v)
    out = attention_forward(inp, use_softmax=True)
    np.testing.assert_allclose(out, np.tile(inp.v.mean(axis=0), (5, 1)), rtol=1e-5, atol=1e-6)


def test_seeded_attention_matches_matmul_oracle():
    inp = seeded_inputs(2, 6, 4).astype(np.float64)
    s = inp.q @ inp.k.T / 2.0
    e = np.exp(s - s.max(axis=1, keepdims=True))
    want = (e / e.sum(axis=1, keepdims=True)) @ inp.v
    np.testing.assert_allclose(attention_forward(inp), want, rtol=1e-12, atol=1e-14)


def test_softmax_rows_sum_to_one_and_outputs_stay_in_hull():
    inp = seeded_inputs(3, 12, 8)
    w = attention_weights(inp)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-6)
    out = attention_forward(inp)
    assert np.all(out <= inp.v.max(axis=0) + 1e-6) and np.all(out >= inp.v.min(axis=0) - 1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_no_softmax_attention_is_one_linear_map(seed):
    inp = seeded_inputs(seed, 8 + seed, 4 + seed)
    assert degeneration_check(inp) <= degeneration_tolerance(inp)


def test_degeneration_is_measured_in_float32():
    inp = seeded_inputs(1, 64, 32).astype(np.float64)
    gap = degeneration_check(inp)
    assert 0.0 < gap <= degeneration_tolerance(inp)
    wide = float(np.max(np.abs(attention_forward(inp, use_softmax=False) - reordered_forward(inp))))
    assert wide < gap


def test_identity_queries_read_out_the_shared_map():
    base = seeded_inputs(4, 5, 5).astype(np.float64)
    inp = AttentionInputs(np.eye(5), base.k, base.v)
    np.testing.assert_allclose(reordered_forward(inp), shared_projection(inp), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(attention_forward(inp, use_softmax=False), shared_projection(inp), rtol=1e-10, atol=1e-12)


def test_softmax_breaks_the_reordering():
    found = find_softmax_counterexample(seed=0)
    assert found is not None
    seed, gap = found
    assert gap > 0.1
    assert degeneration_check(seeded_inputs(seed, 6, 4), use_softmax=True) == gap


def test_attention_input_validation():
    with pytest.raises(DimensionError):
        AttentionInputs(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(DimensionError):
        AttentionInputs(np.zeros((2, 2)), np.zeros((3, 2)), np.zeros((2, 2)))
