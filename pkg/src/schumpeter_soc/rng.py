"""Seeded uniform-draw stream shared by every simulation in the package.

All randomness is taken as uniform doubles in [0, 1) from a PCG64 generator,
one double per draw.  Derived draws (Bernoulli trials, indices) consume
exactly one double each, so the draw order of a run is fully described by
the sequence of calls below.  Block refills do not change the sequence.
"""

from __future__ import annotations

import numpy as np

DEFAULT_BLOCK = 1 << 16


class RandomStream:
    """Buffered stream of uniform doubles from ``PCG64(seed)``.

    Parameters
    ----------
    seed : int
        Unsigned 64-bit seed.
    block : int
        Number of doubles fetched from the generator per refill.
    """

    def __init__(self, seed: int, block: int = DEFAULT_BLOCK):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.block = int(block)
        self._gen = np.random.Generator(np.random.PCG64(seed))
        self._buf = np.empty(0, dtype=np.float64)
        self._pos = 0
        self.draws = 0

    def _ensure(self, k: int) -> None:
        avail = self._buf.size - self._pos
        if avail < k:
            fresh = self._gen.random(max(self.block, k - avail))
            self._buf = np.concatenate([self._buf[self._pos:], fresh])
            self._pos = 0

    def uniform(self) -> float:
        self._ensure(1)
        u = float(self._buf[self._pos])
        self._pos += 1
        self.draws += 1
        return u

    def uniforms(self, size: int) -> np.ndarray:
        """Consume ``size`` draws in order and return them as an array."""
        size = int(size)
        self._ensure(size)
        out = self._buf[self._pos:self._pos + size].copy()
        self._pos += size
        self.draws += size
        return out

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p

    def index(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` from a single draw."""
        return min(int(self.uniform() * n), n - 1)

    # Kernel interface: compiled loops read straight from the buffer and
    # report how far they got.
    def reserve(self, k: int) -> tuple[np.ndarray, int]:
        self._ensure(k)
        return self._buf, self._pos

    def commit(self, pos: int) -> None:
        if not self._pos <= pos <= self._buf.size:
            raise ValueError("commit position outside reserved buffer")
        self.draws += pos - self._pos
        self._pos = pos
