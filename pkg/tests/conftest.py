import importlib.util
from pathlib import Path

import numpy as np
import pytest

from src.core.fields import DcnConfig
from src.tensor.fixture import read_fixture, write_fixture
from src.tensor.nhwc import ElementType, SeededUniform, create, from_array

ROOT = Path(__file__).resolve().parents[1]
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def oracle():
    """tools/scalar_oracle.py loaded by path; it shares no code with src."""
    spec = importlib.util.spec_from_file_location("scalar_oracle", ROOT / "tools" / "scalar_oracle.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def seeded_field(seed, shape, lo, hi):
    """Fill an offset/weight table through the tensor generator, flattened to 4D and reshaped back."""
    n, h, w = shape[:3]
    flat = int(np.prod(shape[3:]))
    t = create((n, h, w, flat), ElementType.FP32, SeededUniform(seed, lo, hi))
    return t.as_fp32().reshape(shape).copy()


@pytest.fixture
def seeded_case():
    """x (1,4,4,16) seed 7, G=2, k=3, offsets seed 8 in [-2,2], weights seed 9 in [-1,1]."""
    def build(softmax=False):
        cfg = DcnConfig(3, 2, 16, softmax_weights=softmax)
        x = create((1, 4, 4, 16), ElementType.FP32, SeededUniform(7, -1.0, 1.0))
        off = seeded_field(8, (1, 4, 4, 2, 9, 2), -2.0, 2.0)
        w = seeded_field(9, (1, 4, 4, 2, 9), -1.0, 1.0)
        return x, off, w, cfg
    return build


@pytest.fixture
def frozen_golden():
    """
    Golden tensor by file name under tests/golden. The first run writes
    make() there (a tensor or a 4D array, stored as fp32); every later
    run reads the stored file back, so comparisons stay against the value
    first frozen.
    """
    def load(name, make):
        path = GOLDEN_DIR / name
        if not path.exists():
            value = make()
            if isinstance(value, np.ndarray):
                value = from_array(value.astype(np.float32))
            write_fixture(value, path)
        return read_fixture(path)
    return load


def max_rel(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1e-12))
