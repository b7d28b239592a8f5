"""Counter-based random number generation.

Every random decision in the project (weight init, crop offsets, kernel
sampling, noise) funnels through :class:`CounterRng`, a splittable stream
built on the splitmix64 finalizer. The i-th draw of a stream is a pure
function of (stream key, i), which makes runs reproducible across
platforms and lets training resume mid-stream: a loop that derives one
child stream per iteration replays bit-identically from a checkpoint.
"""

from __future__ import annotations

import math

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)

# uint64 arithmetic wraps mod 2**64 on purpose here
_ERRSTATE = {"over": "ignore"}


def mix64(z):
    """splitmix64 finalizer; accepts uint64 scalars or arrays."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(**_ERRSTATE):
        z = (z + _GOLDEN) & _U64
        z ^= z >> np.uint64(30)
        z = (z * _MIX1) & _U64
        z ^= z >> np.uint64(27)
        z = (z * _MIX2) & _U64
        z ^= z >> np.uint64(31)
    return z


def _key_from_tag(tag) -> np.uint64:
    if isinstance(tag, str):
        acc = np.uint64(len(tag))
        for ch in tag.encode("utf-8"):
            acc = mix64(acc ^ np.uint64(ch))
        return acc
    if isinstance(tag, (int, np.integer)):
        return mix64(np.uint64(int(tag) & 0xFFFFFFFFFFFFFFFF))
    raise TypeError(f"stream tag must be int or str, got {type(tag).__name__}")


class CounterRng:
    """Splittable counter-based generator.

    Draw i of a stream is mix64(base + i); child streams fold extra tags
    into the base key, so sibling streams never collide regardless of how
    many values each one consumes.
    """

    def __init__(self, seed: int, *tags):
        base = mix64(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF))
        for tag in tags:
            base = mix64(base ^ _key_from_tag(tag))
        self._base = np.uint64(base)
        self._counter = 0
        self.seed = int(seed)
        self._tags = tuple(tags)

    def spawn(self, *tags) -> "CounterRng":
        """Derive an independent child stream keyed by extra tags."""
        return CounterRng(self.seed, *self._tags, *tags)

    def _raw(self, n: int) -> np.ndarray:
        with np.errstate(**_ERRSTATE):
            counters = (self._base + np.arange(self._counter, self._counter + n, dtype=np.uint64)) & _U64
        self._counter += n
        return mix64(counters)

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        """Uniform floats in [low, high) with 53-bit resolution."""
        n = 1 if size is None else int(np.prod(size))
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        out = low + u * (high - low)
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def normal(self, size=None, std: float = 1.0):
        """Standard-normal draws via the Box-Muller transform."""
        n = 1 if size is None else int(np.prod(size))
        pairs = (n + 1) // 2
        raw = self._raw(2 * pairs)
        # keep u1 strictly positive so log() is finite
        u1 = ((raw[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * (1.0 / (1 << 53))
        u2 = (raw[pairs:] >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n] * std
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def integers(self, n: int, size=None):
        """Uniform ints in [0, n). Multiply-shift; bias is ~n/2**53."""
        if n <= 0:
            raise ValueError("integers() needs n >= 1")
        u = self.uniform(size=size if size is not None else 1)
        out = np.floor(np.asarray(u) * n).astype(np.int64)
        out = np.minimum(out, n - 1)
        if size is None:
            return int(out[0])
        return out.reshape(size)

    def choice(self, seq):
        return seq[self.integers(len(seq))]
