"""Deterministic counter-based pseudo-random generation.

All sampling in the package flows through :class:`CounterRng`, a splitmix64
counter generator: draw ``i`` is a pure function ``mix64(key + (i+1)*GAMMA)``
of the seed and the draw index, so sequences are bit-reproducible across
processes and independent of call-site interleaving once a stream is derived.
Sub-streams come from :meth:`CounterRng.derive`, keyed by a label string, so
parallel consumers (per-utterance noise, per-resample bootstrap draws) stay
deterministic regardless of scheduling.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data) -> int:
    """64-bit FNV-1a hash of ``bytes`` or a UTF-8 encoded ``str``."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def mix64(x: int) -> int:
    """splitmix64 finalizer; a bijective avalanche mix on 64 bits."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK64
    return x ^ (x >> 31)


class CounterRng:
    """Counter-based generator: output ``i`` depends only on (seed, i)."""

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._counter = 0

    def derive(self, label) -> "CounterRng":
        """Independent child stream keyed by ``label``; ignores draws so far."""
        return CounterRng(mix64(self.seed ^ fnv1a64(str(label))))

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        z = np.uint64(self.seed) + idx * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def u64(self) -> int:
        return int(self._raw(1)[0])

    def random(self, shape=None):
        """Uniform float64 in [0, 1): scalar or array of ``shape``."""
        if shape is None:
            return float(self._raw(1)[0] >> np.uint64(11)) * 2.0**-53
        n = int(np.prod(shape))
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u.reshape(shape)

    def uniform(self, low: float, high: float, shape=None):
        return low + (high - low) * self.random(shape)

    def normal(self, shape=None):
        """Standard normal via Box-Muller (deterministic, no rejection)."""
        n = 1 if shape is None else int(np.prod(shape))
        m = (n + 1) // 2
        raw = self._raw(2 * m)
        # u1 in (0, 1] so log() is finite.
        u1 = ((raw[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (raw[m:] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        if shape is None:
            return float(z[0])
        return z.reshape(shape)

    def randint(self, low: int, high: int) -> int:
        """Integer in [low, high). Modulo bias is negligible for spans << 2^64."""
        if high <= low:
            raise ValueError(f"empty range [{low}, {high})")
        return low + self.u64() % (high - low)

    def choice(self, seq):
        return seq[self.randint(0, len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i + 1)
            items[i], items[j] = items[j], items[i]
