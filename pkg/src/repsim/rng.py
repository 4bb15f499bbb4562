"""Deterministic counter-based random number generation.

The generator is specified by algorithm rather than platform so that a
seed reproduces the same stream anywhere: raw 64-bit word i of a stream
with seed s is ``mix64(s + (i + 1) * PHI)`` where PHI is the 64-bit
golden-ratio increment and mix64 is the splitmix64 finalizer. Doubles
take the top 53 bits; normals come from Box-Muller pairs.
"""

from __future__ import annotations

import numpy as np

_PHI = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


class SeededRng:
    """Splittable deterministic RNG; one instance per logical execution."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        self.seed = int(seed)
        self._base = np.uint64(self.seed % (1 << 64))
        self._counter = 0

    def _raw(self, count: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + count + 1, dtype=np.uint64)
        self._counter += count
        with np.errstate(over="ignore"):
            return _mix64(self._base + idx * _PHI)

    def uniform(self, shape=None) -> np.ndarray | float:
        """Doubles in [0, 1)."""
        if shape is None:
            return float(self._raw(1)[0] >> np.uint64(11)) * 2.0**-53
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        count = int(np.prod(shape)) if shape else 1
        u = (self._raw(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return u.reshape(shape)

    def normal(self, shape=None) -> np.ndarray | float:
        """Standard normals via Box-Muller."""
        if shape is None:
            return float(self.normal((1,))[0])
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        count = int(np.prod(shape)) if shape else 1
        pairs = (count + 1) // 2
        raw = self._raw(2 * pairs)
        # u1 in (0, 1] so the log is finite.
        u1 = ((raw[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
        u2 = (raw[pairs:] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
        return z[:count].reshape(shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray | int:
        """Integers in [low, high) by scaling uniform doubles."""
        if high <= low:
            raise ValueError("need high > low")
        u = self.uniform(shape if shape is not None else (1,))
        vals = (low + np.floor(u * (high - low))).astype(np.int64)
        return vals if shape is not None else int(vals[0])

    def permutation(self, n: int) -> np.ndarray:
        """Permutation of range(n): stable argsort of n uniform draws."""
        return np.argsort(self.uniform((n,)), kind="stable")

    def spawn(self, key: int) -> "SeededRng":
        """Independent child stream; key selects the substream."""
        with np.errstate(over="ignore"):
            word = (self._base + np.uint64((key + 1) % (1 << 64)) * _PHI) ^ np.uint64(0xA5A5A5A5A5A5A5A5)
            child = _mix64(np.asarray(word, dtype=np.uint64).reshape(1))[0]
        return SeededRng(int(child))
