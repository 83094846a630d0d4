"""Seeded random streams."""
from __future__ import annotations

import numpy as np


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit seed for the sub-stream ``keys`` of ``seed``."""
    state = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in keys]]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


class Rng:
    """A reproducible random stream: identical seed, identical draws.

    Backed by numpy's PCG64 bit generator; Gaussian draws use numpy's
    deterministic ziggurat transform.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed & 0xFFFFFFFFFFFFFFFF)))

    def child(self, *keys: int) -> "Rng":
        return Rng(derive_seed(self.seed, *keys))

    def normal(self, shape, dtype=np.float32) -> np.ndarray:
        return self._gen.standard_normal(shape, dtype=np.float64).astype(dtype)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        """Integers drawn uniformly from the closed range [low, high]."""
        return self._gen.integers(low, high, size=size, endpoint=True)

    def random(self) -> float:
        return float(self._gen.random())

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)
