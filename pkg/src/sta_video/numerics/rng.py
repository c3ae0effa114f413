"""Seeded random streams.

All randomness goes through :class:`SeededRng`, a thin wrapper over numpy's
counter-based Philox-4x64 bit generator. Sub-streams are derived from a
master seed and a purpose string with :func:`derive_seed`, so data, init and
shuffling can each be regenerated on their own.
"""
from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "philox4x64-10"

_U64 = (1 << 64) - 1


def derive_seed(master: int, purpose: str) -> int:
    """First 8 bytes (little-endian) of ``sha256(f"{master}/{purpose}")``."""
    digest = hashlib.sha256(f"{int(master) & _U64}/{purpose}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class SeededRng:
    algorithm = ALGORITHM

    def __init__(self, seed: int):
        self.seed = int(seed) & _U64
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def child(self, purpose: str) -> "SeededRng":
        return SeededRng(derive_seed(self.seed, purpose))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self._gen.choice(a, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, algorithm={self.algorithm!r})"
