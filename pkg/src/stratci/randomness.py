"""Deterministic, splittable random sources backed by counter-based Philox.

A :class:`RandomStream` is a value type: the pair (base_seed, stream_id) fully
determines its draw sequence, identically on every platform.  Derivation from
index tuples uses a splitmix64 hash-combine, so concurrent tasks can each own
a stream without any draw-order coupling.

The draws here are statistical-quality Gaussians; they are not hardened
against floating-point side channels (a known practical caveat for
differentially private noise generation, out of scope here).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ValidationError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _combine(state: int, index: int) -> int:
    return _splitmix64(state ^ (int(index) & _MASK64))


@dataclass(frozen=True)
class RandomStream:
    """An immutable handle on one Philox stream."""

    base_seed: int
    stream_id: int

    def child(self, *indices: int) -> "RandomStream":
        """Derive a sub-stream by hash-combining further indices."""
        sid = self.stream_id
        for idx in indices:
            sid = _combine(sid, idx)
        return RandomStream(self.base_seed, sid)

    def generator(self) -> np.random.Generator:
        """A fresh numpy Generator positioned at the start of this stream."""
        key = np.array([self.base_seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


def derive_stream(base_seed: int, indices: Sequence[int]) -> RandomStream:
    """Map (base_seed, index tuple) to a stream, injectively up to hash collisions."""
    sid = _splitmix64(base_seed & _MASK64)
    for idx in indices:
        sid = _combine(sid, idx)
    return RandomStream(base_seed, sid)


class _Scratch(threading.local):
    """Per-thread reusable Philox/Generator pair.

    Resetting the cached bit generator's state is ~6x cheaper than
    constructing a fresh one and produces bit-identical draws, which matters
    in the million-draw Monte-Carlo checks.
    """

    def __init__(self) -> None:
        self.key = np.zeros(2, dtype=np.uint64)
        self.counter = np.zeros(4, dtype=np.uint64)
        self.bitgen = np.random.Philox(key=self.key)
        self.gen = np.random.Generator(self.bitgen)
        self.template = self.bitgen.state

    def reset(self, stream: RandomStream) -> np.random.Generator:
        self.key[0] = stream.base_seed & _MASK64
        self.key[1] = stream.stream_id & _MASK64
        tpl = self.template
        tpl["state"]["key"] = self.key
        tpl["state"]["counter"] = self.counter
        tpl["buffer_pos"] = 4
        tpl["has_uint32"] = 0
        tpl["uinteger"] = 0
        self.bitgen.state = tpl
        return self.gen


_scratch = _Scratch()


def gaussian(stream: RandomStream, mean: float, variance: float, size: int | None = None):
    """Draw from N(mean, variance); the first draw(s) of the stream.

    ``variance == 0`` returns the mean exactly.  ``size=None`` gives a scalar
    float, otherwise an ndarray.
    """
    if not variance >= 0.0:
        raise ValidationError(f"variance must be nonnegative, got {variance}")
    if variance == 0.0:
        return mean if size is None else np.full(size, mean)
    gen = _scratch.reset(stream)
    sd = variance ** 0.5
    if size is None:
        return mean + sd * gen.standard_normal()
    return mean + sd * gen.standard_normal(size)


def hypergeometric_count(
    stream: RandomStream, population_size: int, positive_count: int, sample_size: int, size: int | None = None
):
    """Exact draw of the positive count in a without-replacement sample.

    Distributed Hypergeometric(N, K, n); the support bounds
    max(0, n + K - N) <= c <= min(n, K) hold on every draw.  No normal or
    binomial approximation is involved.
    """
    N, K, n = population_size, positive_count, sample_size
    if not (0 <= K <= N):
        raise ValidationError(f"positive count {K} outside [0, {N}]")
    if not (0 <= n <= N):
        raise ValidationError(f"sample size {n} outside [0, {N}]")
    gen = _scratch.reset(stream)
    if size is None:
        return int(gen.hypergeometric(K, N - K, n)) if 0 < n else 0
    return gen.hypergeometric(K, N - K, n, size=size) if 0 < n else np.zeros(size, dtype=np.int64)
