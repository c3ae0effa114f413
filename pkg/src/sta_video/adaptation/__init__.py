"""Two-stage adaptation: zero-init temporal training, then LoRA."""
from .lora import LoraAdapter
from .schedule import Adam, TrainingSchedule, clip_global_norm
from .stages import (
    FreezeMask,
    attach_lora,
    default_lora_targets,
    init_stage1,
    stage1_mask,
    stage2_mask,
)
from .train import TrainingLog, accuracy, cross_entropy, train

__all__ = [
    "LoraAdapter", "Adam", "TrainingSchedule", "clip_global_norm", "FreezeMask",
    "attach_lora", "default_lora_targets", "init_stage1", "stage1_mask", "stage2_mask",
    "TrainingLog", "accuracy", "cross_entropy", "train",
]
