import struct

import numpy as np
import pytest

from src.errors import FixtureFormatError, InvalidShapeError
from src.tensor.fixture import HEADER_BYTES, decode, encode, read_fixture, write_fixture
from src.tensor.nhwc import (
    Constant,
    ElementType,
    SeededUniform,
    TensorNHWC,
    Zeros,
    cast,
    create,
    from_array,
)


def test_create_zeros_and_constant():
    z = create((1, 2, 2, 1), ElementType.FP32, Zeros())
    assert z.size == 4
    assert np.all(z.as_fp32() == 0.0)
    c = create((1, 1, 1, 3), ElementType.FP32, Constant(2.5))
    assert c.as_fp32().reshape(-1).tolist() == [2.5, 2.5, 2.5]


def test_seeded_uniform_is_reproducible_and_in_range():
    a = create((1, 4, 4, 8), ElementType.FP32, SeededUniform(42, -1.0, 1.0))
    b = create((1, 4, 4, 8), ElementType.FP32, SeededUniform(42, -1.0, 1.0))
    assert a == b
    assert a.data.tobytes() == b.data.tobytes()
    assert np.all(a.as_fp32() >= -1.0) and np.all(a.as_fp32() < 1.0)
    assert a != create((1, 4, 4, 8), ElementType.FP32, SeededUniform(43, -1.0, 1.0))


@pytest.mark.parametrize("shape", [(0, 1, 1, 1), (1, -2, 1, 1), (1, 1, 1), (1, 1, 1, 1, 1)])
def test_invalid_shapes_raise(shape):
    with pytest.raises(InvalidShapeError):
        create(shape, ElementType.FP32, Zeros())


def test_channel_last_strides():
    t = create((2, 3, 4, 5), ElementType.FP32, SeededUniform(1))
    assert t.strides_elems == (60, 20, 5, 1)
    assert t.flat_index(1, 2, 3, 4) == 119
    assert t.as_fp32().reshape(-1)[t.flat_index(1, 0, 2, 3)] == t.as_fp32()[1, 0, 2, 3]


def test_tensor_data_is_read_only():
    t = create((1, 1, 1, 2), ElementType.FP32, Constant(1.0))
    with pytest.raises(ValueError):
        t.data[0, 0, 0, 0] = 3.0


def test_fp16_storage_constants():
    t = from_array(np.array([1.0, 0.5], dtype=np.float32).reshape(1, 1, 1, 2), ElementType.FP16)
    assert t.data.tobytes() == bytes([0x00, 0x3C, 0x00, 0x38])
    tenth = cast(from_array(np.full((1, 1, 1, 1), 0.1, dtype=np.float32)), ElementType.FP16)
    assert float(tenth.as_fp32()[0, 0, 0, 0]) == 0.0999755859375


def test_fp16_round_trip_introduces_no_nan_on_finite_inputs():
    x = create((1, 3, 3, 8), ElementType.FP32, SeededUniform(5, -100.0, 100.0))
    back = cast(cast(x, ElementType.FP16), ElementType.FP32)
    assert not np.isnan(back.as_fp32()).any()
    assert cast(x, ElementType.FP32) is x


def test_fp16_cast_saturates_to_inf():
    big = from_array(np.full((1, 1, 1, 1), 1e6, dtype=np.float32))
    assert np.isinf(cast(big, ElementType.FP16).as_fp32()).all()


@pytest.mark.parametrize("text,expected", [("f32", ElementType.FP32), ("fp16-storage", ElementType.FP16),
                                           ("F16", ElementType.FP16)])
def test_element_type_parse(text, expected):
    assert ElementType.parse(text) is expected


def test_fixture_header_layout():
    t = create((1, 2, 3, 4), ElementType.FP16, Constant(1.0))
    buf = encode(t)
    assert buf[:4] == b"DCNT"
    assert struct.unpack_from("<I", buf, 4)[0] == 1
    assert buf[8] == 1 and buf[9] == 4
    assert struct.unpack_from("<4Q", buf, 12) == (1, 2, 3, 4)
    assert len(buf) == HEADER_BYTES + 24 * 2
    assert decode(buf) == t


def test_fixture_file_round_trip(tmp_path):
    t = create((2, 3, 1, 5), ElementType.FP32, SeededUniform(3))
    p = tmp_path / "sub" / "t.dcnt"
    write_fixture(t, p)
    assert read_fixture(p) == t


def _valid_bytes():
    return bytearray(encode(create((1, 1, 2, 2), ElementType.FP32, Constant(1.0))))


@pytest.mark.parametrize("mutate,offset", [
    (lambda b: b.__setitem__(slice(0, 4), b"XXXX"), 0),
    (lambda b: b.__setitem__(slice(4, 8), struct.pack("<I", 2)), 4),
    (lambda b: b.__setitem__(8, 7), 8),
    (lambda b: b.__setitem__(9, 3), 9),
])
def test_fixture_header_errors_report_offset(mutate, offset):
    buf = _valid_bytes()
    mutate(buf)
    with pytest.raises(FixtureFormatError) as err:
        decode(bytes(buf), "bad.dcnt")
    assert err.value.offset == offset
    assert "bad.dcnt" in str(err.value)


def test_fixture_truncated_payload():
    buf = bytes(_valid_bytes())[:-3]
    with pytest.raises(FixtureFormatError) as err:
        decode(buf)
    assert err.value.offset == len(buf)


def test_fixture_truncated_header():
    with pytest.raises(FixtureFormatError) as err:
        decode(b"DCN")
    assert err.value.offset == 3


def test_fixture_rejects_zero_dimension():
    buf = _valid_bytes()
    buf[12:20] = struct.pack("<Q", 0)
    with pytest.raises(FixtureFormatError):
        decode(bytes(buf))


def test_seeded_create_matches_frozen_golden(frozen_golden):
    t = create((1, 4, 4, 8), ElementType.FP32, SeededUniform(42, -1.0, 1.0))
    assert t == frozen_golden("create_seed42.dcnt", lambda: t)
    assert create((1, 4, 4, 8), ElementType.FP32, SeededUniform(42, -1.0, 1.0)) == t


@pytest.mark.parametrize("shape", [(1, 1, 1, 1), (1, 2, 3, 1), (2, 1, 4, 3), (2, 4, 4, 8)])
def test_flat_index_addresses_every_element_once(shape):
    t = create(shape, ElementType.FP32, SeededUniform(5))
    flat = t.data.reshape(-1)
    seen = np.zeros(t.size, dtype=np.int64)
    for n, h, w, c in np.ndindex(*shape):
        i = t.flat_index(n, h, w, c)
        assert 0 <= i < t.size
        assert flat[i] == t.data[n, h, w, c]
        seen[i] += 1
    assert np.all(seen == 1)


def test_tensor_rejects_dtype_mismatch():
    with pytest.raises(InvalidShapeError):
        TensorNHWC(np.zeros((1, 1, 1, 1), dtype=np.float64), ElementType.FP32)
