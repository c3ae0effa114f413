"""Experiment configs, runners, reports and the command line."""
from .config import (
    AblationConfig,
    ExperimentConfig,
    GradcheckConfig,
    LoraConfig,
    StageConfig,
    TrainConfig,
    load_config,
)
from .metrics import EvalReport, VsmReport, confusion_matrix, sweep_thresholds, vsm_answers
from .runner import (
    AblationResult,
    TrainResult,
    build_dataset,
    build_vsm,
    evaluate,
    run_ablation,
    run_eval,
    run_gradcheck,
    run_train,
    run_vsm_eval,
)

__all__ = [
    "AblationConfig", "ExperimentConfig", "GradcheckConfig", "LoraConfig", "StageConfig",
    "TrainConfig", "load_config", "EvalReport", "VsmReport", "confusion_matrix",
    "sweep_thresholds", "vsm_answers", "AblationResult", "TrainResult", "build_dataset",
    "build_vsm", "evaluate", "run_ablation", "run_eval", "run_gradcheck", "run_train",
    "run_vsm_eval",
]
