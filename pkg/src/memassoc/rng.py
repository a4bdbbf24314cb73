"""Seeded, platform-independent random numbers.

The generator is splitmix64. Uniform doubles use the top 53 bits of each raw
output; normals use Box-Muller on pairs of uniforms. Everything is vectorized
with wrapping ``uint64`` arithmetic so large draws stay cheap.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class Rng:
    """splitmix64 stream. ``state`` is the full generator state."""

    def __init__(self, seed: int = 0):
        self.state = int(seed) & MASK64

    def copy(self) -> "Rng":
        return Rng(self.state)

    def next_u64(self, n: int | None = None):
        """Raw 64-bit outputs; a Python int when ``n`` is None, else a uint64 array."""
        count = 1 if n is None else int(n)
        if count < 0:
            raise ValueError("count must be non-negative")
        steps = np.arange(1, count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + steps * np.uint64(GAMMA)
            out = _mix(states)
        self.state = (self.state + count * GAMMA) & MASK64
        return int(out[0]) if n is None else out

    def uniform(self, shape=()) -> np.ndarray | float:
        """Doubles in [0, 1)."""
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        if shape == ():
            return float(u[0])
        return u.reshape(shape)

    def randbelow(self, k: int, shape=()):
        """Integers uniform on [0, k)."""
        if k <= 0:
            raise ValueError("k must be positive")
        idx = np.floor(np.asarray(self.uniform(shape)) * k).astype(np.int64)
        return int(idx) if shape == () else idx

    def normal(self, shape=()) -> np.ndarray | float:
        """Standard normals via Box-Muller.

        Two uniforms per output pair; an odd count drops the sine half of the
        final pair. The radius uses ``1 - u`` so it is never ``log(0)``.
        """
        n = int(np.prod(shape, dtype=np.int64))
        pairs = (n + 1) // 2
        u = self.uniform((pairs, 2)) if pairs else np.zeros((0, 2))
        z = box_muller(1.0 - u[:, 0], u[:, 1]).reshape(-1)[:n]
        if shape == ():
            return float(z[0])
        return z.reshape(shape)


def box_muller(u1, u2) -> np.ndarray:
    """Map ``u1`` in (0, 1] and ``u2`` in [0, 1) to interleaved normal pairs."""
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    radius = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    return np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=-1)
