# src/baselines/attention.py
"""
Dense single-window scaled dot-product attention, small scale only.

Without softmax, (Q K^T / sqrt(d)) V equals Q (K^T V / sqrt(d)): every
query goes through the same d x d matrix, i.e. one linear projection.
``degeneration_check`` measures how far the two orderings disagree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import DimensionError

MAX_TOKENS = 4096


@dataclass(frozen=True)
class AttentionInputs:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("q", "k", "v"):
            a = np.asarray(getattr(self, name))
            if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
                raise DimensionError(name, "(N_tokens >= 1, d >= 1)", a.shape)
        if not (self.q.shape == self.k.shape == self.v.shape):
            raise DimensionError("qkv", self.q.shape, (self.k.shape, self.v.shape))

    @property
    def tokens(self) -> int:
        return int(self.q.shape[0])

    @property
    def d(self) -> int:
        return int(self.q.shape[1])

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.d)

    def astype(self, dtype) -> "AttentionInputs":
        return AttentionInputs(self.q.astype(dtype), self.k.astype(dtype), self.v.astype(dtype))


def seeded_inputs(seed: int, tokens: int, d: int, lo: float = -1.0, hi: float = 1.0) -> AttentionInputs:
    rng = np.random.default_rng(seed)
    q, k, v = (rng.uniform(lo, hi, size=(tokens, d)).astype(np.float32) for _ in range(3))
    return AttentionInputs(q, k, v)


def _softmax_rows(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def attention_weights(inp: AttentionInputs, use_softmax: bool = True) -> np.ndarray:
    scores = (inp.q @ inp.k.T) * inp.q.dtype.type(inp.scale)
    return _softmax_rows(scores) if use_softmax else scores


def attention_forward(inp: AttentionInputs, use_softmax: bool = True) -> np.ndarray:
    """softmax(QK^T/sqrt(d)) V, or (QK^T/sqrt(d)) V in that order when use_softmax is False."""
    return attention_weights(inp, use_softmax) @ inp.v


def shared_projection(inp: AttentionInputs) -> np.ndarray:
    """M = K^T V / sqrt(d), the d x d map every query shares once softmax is gone."""
    return (inp.k.T @ inp.v) * inp.k.dtype.type(inp.scale)


def reordered_forward(inp: AttentionInputs) -> np.ndarray:
    return inp.q @ shared_projection(inp)


def degeneration_check(inp: AttentionInputs, use_softmax: bool = False) -> float:
    """
    max |direct - Q (K^T V / sqrt(d))| with both orderings in float32.
    With use_softmax the direct side keeps its softmax, which breaks the identity.
    """
    narrow = inp.astype(np.float32)
    direct = attention_forward(narrow, use_softmax)
    return float(np.max(np.abs(direct.astype(np.float64) - reordered_forward(narrow))))


def degeneration_tolerance(inp: AttentionInputs, rel: float = 1e-5) -> float:
    direct = attention_forward(inp.astype(np.float64), use_softmax=False)
    return rel * (1.0 + float(np.max(np.abs(direct))))


def find_softmax_counterexample(seed: int = 0, tokens: int = 6, d: int = 4, threshold: float = 0.1,
                                tries: int = 100) -> Optional[Tuple[int, float]]:
    """First seed from `seed` whose softmax attention differs from the reordered linear form by > threshold."""
    for s in range(seed, seed + tries):
        gap = degeneration_check(seeded_inputs(s, tokens, d), use_softmax=True)
        if gap > threshold:
            return s, gap
    return None
