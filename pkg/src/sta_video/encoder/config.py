from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .._dataclass_io import from_dict, to_dict
from ..errors import ConfigError

TEMPORAL_ORDERS = ("spatial_first", "temporal_first")
HEAD_SCALES = (1.0, 0.5, 0.25)
PLACEMENTS = ("all", "first_half", "uniform_half", "none")


def placement_indices(name: str, blocks: int) -> tuple[int, ...]:
    """Block indices carrying temporal attention for a named placement."""
    if name == "all":
        return tuple(range(blocks))
    if name == "none" or blocks == 0:
        return ()
    half = max(1, blocks // 2)
    if name == "first_half":
        return tuple(range(half))
    if name == "uniform_half":
        return tuple(sorted({(i * blocks) // half for i in range(half)}))
    raise ConfigError(f"unknown sta_placement {name!r}; expected one of {PLACEMENTS}")


def temporal_head_count(spatial_heads: int, head_scale: float) -> int:
    # round half up, never below one head
    return max(1, math.floor(head_scale * spatial_heads + 0.5))


@dataclass(frozen=True)
class EncoderConfig:
    frames: int = 8
    height: int = 32
    width: int = 32
    channels: int = 3
    patch: int = 8
    dim: int = 64
    blocks: int = 4
    spatial_heads: int = 4
    head_dim: int = 16
    head_scale: float = 0.25
    temporal_order: str = "spatial_first"
    # a placement name or explicit block indices
    sta_placement: str | tuple[int, ...] = "all"
    temporal_enabled: bool = True
    mlp_ratio: int = 4
    proj_dim: int = 64
    num_classes: int = 2
    ln_eps: float = 1e-5
    rope_base: float = 10000.0
    placement: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("frames", "height", "width", "channels", "patch", "dim",
                     "spatial_heads", "head_dim", "mlp_ratio", "proj_dim", "num_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"encoder.{name} must be >= 1, got {getattr(self, name)}")
        if self.blocks < 0:
            raise ConfigError(f"encoder.blocks must be >= 0, got {self.blocks}")
        if self.height % self.patch or self.width % self.patch:
            raise ConfigError(
                f"frame {self.height}x{self.width} is not tiled by {self.patch}x{self.patch} patches")
        if self.dim != self.spatial_heads * self.head_dim:
            raise ConfigError(
                f"dim {self.dim} != spatial_heads {self.spatial_heads} x head_dim {self.head_dim}")
        if self.head_dim % 4:
            raise ConfigError(f"head_dim must be divisible by 4 for 2D RoPE, got {self.head_dim}")
        if not self.head_scale > 0:
            raise ConfigError(f"head_scale must be positive, got {self.head_scale}")
        if self.temporal_heads * self.head_dim > self.dim:
            raise ConfigError(
                f"temporal width {self.temporal_heads * self.head_dim} exceeds dim {self.dim}")
        if self.temporal_order not in TEMPORAL_ORDERS:
            raise ConfigError(
                f"unknown temporal_order {self.temporal_order!r}; expected one of {TEMPORAL_ORDERS}")
        if self.ln_eps <= 0:
            raise ConfigError("ln_eps must be positive")
        if isinstance(self.sta_placement, str):
            idx = placement_indices(self.sta_placement, self.blocks)
        else:
            idx = tuple(sorted(set(int(i) for i in self.sta_placement)))
            bad = [i for i in idx if not 0 <= i < self.blocks]
            if bad:
                raise ConfigError(f"sta_placement indices {bad} outside [0, {self.blocks})")
        object.__setattr__(self, "placement", idx)

    @property
    def grid(self) -> tuple[int, int]:
        return self.height // self.patch, self.width // self.patch

    @property
    def num_patches(self) -> int:
        return (self.height * self.width) // (self.patch * self.patch)

    @property
    def patch_pixels(self) -> int:
        return self.patch * self.patch * self.channels

    @property
    def temporal_heads(self) -> int:
        return temporal_head_count(self.spatial_heads, self.head_scale)

    @property
    def temporal_dim(self) -> int:
        return self.temporal_heads * self.head_dim

    @property
    def hidden_dim(self) -> int:
        return self.mlp_ratio * self.dim

    def has_temporal(self, block: int) -> bool:
        return self.temporal_enabled and block in self.placement

    def replace(self, **changes) -> "EncoderConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = to_dict(self)
        d.pop("placement", None)
        return d

    @classmethod
    def from_dict(cls, data: dict, where: str = "$.encoder") -> "EncoderConfig":
        return from_dict(cls, data, where)
