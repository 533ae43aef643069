"""Deterministic counter-based random streams (Philox-4x64 via numpy)."""
from __future__ import annotations

import zlib

import numpy as np


class Rng:
    """Seeded random stream.

    Child streams are keyed by name rather than by draw order, so adding a
    consumer in one place never shifts the numbers another consumer sees.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.path = path
        ss = np.random.SeedSequence([self.seed, *path])
        self._gen = np.random.Generator(np.random.Philox(ss))

    def child(self, name: str | int) -> "Rng":
        key = name if isinstance(name, int) else zlib.crc32(str(name).encode())
        return Rng(self.seed, self.path + (int(key),))

    def normal(self, size=None, scale: float = 1.0, dtype=np.float64) -> np.ndarray:
        return (self._gen.standard_normal(size) * scale).astype(dtype, copy=False)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int | None = None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace: bool = True):
        return self._gen.choice(a, size=size, replace=replace)
