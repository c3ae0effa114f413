"""Freeze masks and the two adaptation stages.

Stage 1 trains only the temporal attention blocks, their pre-norms and the
task head, starting from a zeroed temporal output projection so the encoder
initially reproduces the spatial-only model. Stage 2 adds low-rank adapters
on the frozen linear layers and trains them together with the stage-1 set.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from ..encoder.model import EncoderWeights
from ..errors import ConfigError
from ..numerics import SeededRng
from .lora import LoraAdapter

_STAGE1 = re.compile(r"^(blocks\.\d+\.(temporal|temporal_ln)\.[^.]+|head\.(weight|bias))$")


@dataclass(frozen=True)
class FreezeMask:
    trainable: frozenset[str]

    def apply(self, weights: EncoderWeights) -> None:
        for name, p in weights.named_parameters():
            p.trainable = name in self.trainable

    def partition(self, weights: EncoderWeights) -> tuple[int, int]:
        """(trainable, frozen) scalar counts."""
        t = f = 0
        for name, p in weights.named_parameters():
            if name in self.trainable:
                t += p.size
            else:
                f += p.size
        return t, f

    def __contains__(self, path: str) -> bool:
        return path in self.trainable


def stage1_paths(weights: EncoderWeights) -> frozenset[str]:
    return frozenset(name for name in weights.params if _STAGE1.match(name))


def stage1_mask(weights: EncoderWeights) -> FreezeMask:
    return FreezeMask(stage1_paths(weights))


def stage2_mask(weights: EncoderWeights) -> FreezeMask:
    lora = {name for a in weights.adapters.values() for name, _ in a.named_parameters()}
    return FreezeMask(stage1_paths(weights) | frozenset(lora))


def init_stage1(weights: EncoderWeights) -> tuple[EncoderWeights, FreezeMask]:
    """Copy ``weights``, zero every temporal output projection, freeze the rest."""
    out = weights.copy()
    for name, p in out.params.items():
        if name.endswith(".temporal.wo"):
            p.data[...] = 0.0
    mask = stage1_mask(out)
    mask.apply(out)
    return out, mask


def default_lora_targets(weights: EncoderWeights) -> list[str]:
    """Frozen 2-D projections: spatial Q/K/V/O, both MLP layers, the projector.

    Weights already trained directly (temporal attention, head) are left out
    so every weight under an adapter stays frozen.
    """
    suffixes = (".spatial.wq", ".spatial.wk", ".spatial.wv", ".spatial.wo", ".mlp.fc1", ".mlp.fc2")
    targets = [n for n in weights.params if n.endswith(suffixes)]
    targets.append("projector.weight")
    return targets


def attach_lora(weights: EncoderWeights, targets: Sequence[str] | None = None, rank: int = 4,
                alpha: float = 8.0, seed: int = 0) -> dict[str, LoraAdapter]:
    """Attach one adapter per target (in place) and freeze the targeted base weights."""
    if targets is None:
        targets = default_lora_targets(weights)
    root = SeededRng(seed)
    created: dict[str, LoraAdapter] = {}
    for target in targets:
        if target not in weights.params:
            raise ConfigError(f"LoRA target {target!r} does not exist")
        base = weights.params[target]
        if base.ndim != 2:
            raise ConfigError(f"LoRA target {target!r} is not 2-D (shape {base.shape})")
        if target in weights.adapters:
            raise ConfigError(f"LoRA target {target!r} already has an adapter")
        adapter = LoraAdapter.create(target, base.shape[0], base.shape[1], rank, alpha,
                                     root.child(target))
        created[target] = adapter
    for target, adapter in created.items():
        weights.params[target].trainable = False
        weights.adapters[target] = adapter
    return created


def mask_paths(names: Iterable[str]) -> FreezeMask:
    return FreezeMask(frozenset(names))
