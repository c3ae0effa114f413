"""Low-rank adapters on frozen 2-D weights."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..numerics import Parameter, SeededRng, Tensor, matmul


class LoraAdapter:
    """``W x -> W x + (alpha / r) * x A B`` with ``A: D_in x r`` and ``B: r x D_out``.

    ``B`` starts at zero, so a freshly attached adapter changes nothing.
    """

    def __init__(self, target: str, a: Parameter, b: Parameter, alpha: float):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ConfigError(f"adapter {target}: incompatible factors {a.shape} and {b.shape}")
        self.target = target
        self.a = a
        self.b = b
        self.alpha = float(alpha)

    @classmethod
    def create(cls, target: str, d_in: int, d_out: int, rank: int, alpha: float,
               rng: SeededRng) -> "LoraAdapter":
        if not 1 <= rank <= min(d_in, d_out):
            raise ConfigError(f"adapter {target}: rank {rank} outside [1, {min(d_in, d_out)}]")
        bound = 1.0 / np.sqrt(d_in)
        a = Parameter(rng.uniform(-bound, bound, size=(d_in, rank)))
        b = Parameter(np.zeros((rank, d_out)))
        return cls(target, a, b, alpha)

    @property
    def rank(self) -> int:
        return self.a.shape[1]

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    @property
    def num_parameters(self) -> int:
        return self.a.size + self.b.size

    def delta(self, x: Tensor) -> Tensor:
        return matmul(matmul(x, self.a), self.b) * self.scale

    def merged_delta(self) -> np.ndarray:
        return self.scale * (self.a.data @ self.b.data)

    def named_parameters(self):
        yield f"{self.target}.lora_a", self.a
        yield f"{self.target}.lora_b", self.b

    def copy(self) -> "LoraAdapter":
        return LoraAdapter(self.target, Parameter(self.a.data.copy(), self.a.trainable),
                           Parameter(self.b.data.copy(), self.b.trainable), self.alpha)
