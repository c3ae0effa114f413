from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..numerics import Parameter


@dataclass(frozen=True)
class TrainingSchedule:
    stage: int = 1
    epochs: int = 8
    warmup_steps: int = 100
    base_lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    grad_clip: float = 1.0
    seed: int = 0
    # optional hard cap on optimizer steps (0 = run every epoch in full)
    max_steps: int = 0

    def __post_init__(self):
        if self.stage not in (1, 2):
            raise ConfigError(f"stage must be 1 or 2, got {self.stage}")
        if self.epochs < 0 or self.batch_size < 1 or self.warmup_steps < 0 or self.max_steps < 0:
            raise ConfigError("epochs, batch_size, warmup_steps and max_steps must be non-negative "
                              "(batch_size >= 1)")
        if self.base_lr < 0:
            raise ConfigError(f"base_lr must be >= 0, got {self.base_lr}")

    def total_steps(self, num_examples: int) -> int:
        per_epoch = -(-num_examples // self.batch_size)
        total = per_epoch * self.epochs
        return min(total, self.max_steps) if self.max_steps else total

    def lr(self, step: int) -> float:
        """Learning rate for 1-indexed ``step``; linear warmup in stage 1 only."""
        if self.stage == 1 and self.warmup_steps > 0:
            return self.base_lr * min(1.0, step / self.warmup_steps)
        return self.base_lr


class Adam:
    """Adam with bias correction; state is keyed by parameter path."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Parameter], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in sorted(params):
            p = params[name]
            g = p.grad
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            if lr != 0.0:
                p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_global_norm(params: dict[str, Parameter], max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.vdot(params[k].grad, params[k].grad)) for k in sorted(params))))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params.values():
            p.grad *= scale
    return total
