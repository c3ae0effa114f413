"""One JSON document that fully determines a run."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from pathlib import Path

from .._dataclass_io import from_dict, to_dict
from ..adaptation.schedule import TrainingSchedule
from ..encoder.config import HEAD_SCALES, PLACEMENTS, TEMPORAL_ORDERS, EncoderConfig
from ..errors import ConfigError
from ..numerics import derive_seed
from ..synthvideo import DatasetConfig, VideoConfig, VsmConfig


@dataclass(frozen=True)
class StageConfig:
    epochs: int = 4
    base_lr: float = 1e-3
    warmup_steps: int = 100
    batch_size: int = 32
    grad_clip: float = 1.0
    max_steps: int = 0

    def schedule(self, stage: int, seed: int) -> TrainingSchedule:
        return TrainingSchedule(stage=stage, epochs=self.epochs, warmup_steps=self.warmup_steps,
                                base_lr=self.base_lr, batch_size=self.batch_size,
                                grad_clip=self.grad_clip, seed=seed, max_steps=self.max_steps)


@dataclass(frozen=True)
class LoraConfig:
    rank: int = 4
    alpha: float = 8.0
    # empty means the frozen spatial, MLP and projector weights
    targets: tuple[str, ...] = ()


@dataclass(frozen=True)
class TrainConfig:
    stage1: StageConfig = StageConfig()
    stage2: StageConfig = StageConfig(epochs=2, base_lr=3e-4, warmup_steps=0)
    lora: LoraConfig = LoraConfig()
    checkpoint_every: int = 0
    eval_each_epoch: bool = True


@dataclass(frozen=True)
class AblationConfig:
    temporal_order: tuple[str, ...] = TEMPORAL_ORDERS
    head_scale: tuple[float, ...] = HEAD_SCALES
    sta_placement: tuple[str, ...] = ("all",)
    seeds: tuple[int, ...] = (0, 1, 2)
    workers: int = 1

    def __post_init__(self):
        for v in self.temporal_order:
            if v not in TEMPORAL_ORDERS:
                raise ConfigError(f"$.ablation.temporal_order: {v!r} not in {TEMPORAL_ORDERS}")
        for v in self.head_scale:
            if v not in HEAD_SCALES:
                raise ConfigError(f"$.ablation.head_scale: {v!r} not in {HEAD_SCALES}")
        for v in self.sta_placement:
            if v not in PLACEMENTS:
                raise ConfigError(f"$.ablation.sta_placement: {v!r} not in {PLACEMENTS}")
        if not (self.temporal_order and self.head_scale and self.sta_placement):
            raise ConfigError("$.ablation: every axis needs at least one value")
        if len(self.seeds) < 3:
            raise ConfigError(f"$.ablation.seeds: need at least 3 seeds, got {len(self.seeds)}")
        if self.workers < 1:
            raise ConfigError("$.ablation.workers must be >= 1")


@dataclass(frozen=True)
class GradcheckConfig:
    encoder: EncoderConfig = EncoderConfig(frames=3, height=16, width=16, patch=8, dim=8, blocks=1,
                                           spatial_heads=2, head_dim=4, head_scale=0.5,
                                           proj_dim=8, num_classes=2)
    batch: int = 2
    coords_per_param: int = 64
    tolerance: float = 1e-4
    step: float = 1e-5


@dataclass(frozen=True)
class ExperimentConfig:
    encoder: EncoderConfig = EncoderConfig()
    data: DatasetConfig = DatasetConfig()
    train: TrainConfig = TrainConfig()
    vsm: VsmConfig = VsmConfig()
    ablation: AblationConfig = AblationConfig()
    gradcheck: GradcheckConfig = GradcheckConfig()
    seed: int = 0
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.encoder.num_classes != len(self.data.classes):
            raise ConfigError(f"$.encoder.num_classes is {self.encoder.num_classes} but "
                              f"$.data.classes lists {len(self.data.classes)} classes")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"$.seed must be an unsigned 64-bit integer, got {self.seed}")

    @property
    def video(self) -> VideoConfig:
        e = self.encoder
        return VideoConfig(e.frames, e.height, e.width, e.channels)

    def sub_seed(self, purpose: str) -> int:
        return derive_seed(self.seed, purpose)

    def replace(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = to_dict(self)
        for enc in (d["encoder"], d["gradcheck"]["encoder"]):
            enc.pop("placement", None)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("$: the config must be a JSON object")
        return from_dict(cls, data, "$")


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    try:
        return ExperimentConfig.from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
