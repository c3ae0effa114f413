"""Rotary position encodings over frame index (1D) and patch grid (2D).

Coordinate pair ``(2j, 2j+1)`` of a head vector at position ``p`` is rotated
by ``p / base ** (2j / dim)``. The 2D variant splits the head in halves: the
first half is rotated by the patch row, the second by the patch column, each
with the 1D rule at half the dimension.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import Tensor, as_tensor, rotate_pairs

DEFAULT_BASE = 10000.0


@dataclass(frozen=True)
class RotaryTable:
    dim: int
    max_positions: int
    base: float = DEFAULT_BASE
    cos: np.ndarray = field(init=False, repr=False, compare=False)
    sin: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim <= 0 or self.dim % 2:
            raise ConfigError(f"rotary dim must be a positive even number, got {self.dim}")
        if self.max_positions < 1:
            raise ConfigError(f"max_positions must be >= 1, got {self.max_positions}")
        inv_freq = self.base ** (-np.arange(0, self.dim, 2, dtype=np.float64) / self.dim)
        angles = np.arange(self.max_positions, dtype=np.float64)[:, None] * inv_freq[None, :]
        cos = np.repeat(np.cos(angles), 2, axis=1)
        sin = np.repeat(np.sin(angles), 2, axis=1)
        cos.setflags(write=False)
        sin.setflags(write=False)
        object.__setattr__(self, "cos", cos)
        object.__setattr__(self, "sin", sin)

    def lookup(self, positions) -> tuple[np.ndarray, np.ndarray]:
        pos = np.asarray(positions, dtype=np.int64)
        if pos.size and (pos.min() < 0 or pos.max() >= self.max_positions):
            raise DimensionError(
                f"positions must lie in [0, {self.max_positions}), got range "
                f"[{pos.min()}, {pos.max()}]")
        return self.cos[pos], self.sin[pos]


def apply_rope_1d(x, positions, table: RotaryTable | None = None,
                  base: float = DEFAULT_BASE) -> Tensor:
    """Rotate ``x[..., T, d]`` by frame index along the second-to-last axis."""
    x = as_tensor(x)
    d = x.shape[-1]
    if d % 2:
        raise ConfigError(f"1D RoPE needs an even head dimension, got {d}")
    pos = np.asarray(positions, dtype=np.int64)
    if table is None:
        table = RotaryTable(d, int(pos.max()) + 1 if pos.size else 1, base)
    elif table.dim != d:
        raise ConfigError(f"rotary table dim {table.dim} does not match head dim {d}")
    cos, sin = table.lookup(pos)
    return rotate_pairs(x, cos, sin)


def rope_2d_tables(rows, cols, table: RotaryTable) -> tuple[np.ndarray, np.ndarray]:
    cr, sr = table.lookup(rows)
    cc, sc = table.lookup(cols)
    return np.concatenate([cr, cc], axis=-1), np.concatenate([sr, sc], axis=-1)


def apply_rope_2d(x, rows, cols, table: RotaryTable | None = None,
                  base: float = DEFAULT_BASE) -> Tensor:
    """Rotate ``x[..., N, d]``: first ``d/2`` coords by row, the rest by column.

    ``table`` is the half-dimension table (``dim == d // 2``).
    """
    x = as_tensor(x)
    d = x.shape[-1]
    if d % 4:
        raise ConfigError(f"2D RoPE needs a head dimension divisible by 4, got {d}")
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    if r.shape != c.shape:
        raise DimensionError(f"rows {r.shape} and cols {c.shape} differ in shape")
    if table is None:
        top = int(max(r.max(initial=0), c.max(initial=0))) + 1
        table = RotaryTable(d // 2, top, base)
    elif table.dim != d // 2:
        raise ConfigError(f"2D rotary table dim {table.dim} should be {d // 2}")
    cos, sin = rope_2d_tables(r, c, table)
    return rotate_pairs(x, cos, sin)
