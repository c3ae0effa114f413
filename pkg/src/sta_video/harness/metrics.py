"""Classification and similarity-matching reports."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import DataError
from ..synthvideo import ANSWERS, MIRROR


def confusion_matrix(labels, predictions, num_classes: int) -> np.ndarray:
    """``cm[true, predicted]`` counts."""
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape:
        raise DataError(f"{labels.shape[0]} labels but {predictions.shape[0]} predictions")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def mirror_indices(class_names: Sequence[str]) -> list[int | None]:
    index = {c: i for i, c in enumerate(class_names)}
    return [index.get(MIRROR.get(c)) for c in class_names]


@dataclass
class EvalReport:
    class_names: list[str]
    confusion: list[list[int]]
    accuracy: float
    precision: list[float]
    recall: list[float]
    support: list[int]
    # share of all errors that land on the true class's temporal mirror
    mirror_confusion_rate: float
    # mirror mass over all test clips
    mirror_mass_fraction: float
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, labels, predictions, class_names: Sequence[str],
                         metadata: dict | None = None) -> "EvalReport":
        k = len(class_names)
        cm = confusion_matrix(labels, predictions, k)
        total = int(cm.sum())
        diag = np.diag(cm)
        col = cm.sum(axis=0)
        row = cm.sum(axis=1)
        mirrors = mirror_indices(class_names)
        mirror_mass = sum(int(cm[i, j]) for i, j in enumerate(mirrors) if j is not None)
        off_diag = total - int(diag.sum())
        return cls(
            class_names=list(class_names),
            confusion=cm.tolist(),
            accuracy=float(diag.sum() / total) if total else 0.0,
            precision=[float(diag[i] / col[i]) if col[i] else 0.0 for i in range(k)],
            recall=[float(diag[i] / row[i]) if row[i] else 0.0 for i in range(k)],
            support=[int(r) for r in row],
            mirror_confusion_rate=mirror_mass / off_diag if off_diag else 0.0,
            mirror_mass_fraction=mirror_mass / total if total else 0.0,
            metadata=dict(metadata or {}),
        )

    def to_dict(self) -> dict:
        return dict(vars(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def render(self) -> str:
        width = max(len(c) for c in self.class_names)
        lines = [f"accuracy {self.accuracy:.4f}  mirror-confusion {self.mirror_confusion_rate:.4f}",
                 " " * (width + 2) + " ".join(f"{i:>5d}" for i in range(len(self.class_names)))]
        for i, (name, row) in enumerate(zip(self.class_names, self.confusion)):
            lines.append(f"{name:>{width}} {i}" + "".join(f" {v:>5d}" for v in row)
                         + f"   P={self.precision[i]:.3f} R={self.recall[i]:.3f}")
        return "\n".join(lines)


def vsm_answers(sim_ref1: np.ndarray, sim_ref2: np.ndarray, tau: float) -> np.ndarray:
    """Pick the closer reference if its similarity reaches ``tau``, else ``none``."""
    pick = np.where(sim_ref1 >= sim_ref2, "ref1", "ref2")
    return np.where(np.maximum(sim_ref1, sim_ref2) >= tau, pick, "none")


def sweep_thresholds(sim_ref1: np.ndarray, sim_ref2: np.ndarray, answers: np.ndarray,
                     grid: Sequence[float] | None = None) -> tuple[float, list[tuple[float, float]]]:
    """Accuracy for every threshold in ``grid``; returns the best one and the curve.

    Without a grid the candidates are every observed max-similarity plus a
    value above all of them, which covers every distinct decision rule.
    Ties go to the smallest threshold.
    """
    best = np.maximum(sim_ref1, sim_ref2)
    if grid is None or len(grid) == 0:
        grid = sorted(set(float(v) for v in best)) + [float(best.max()) + 1e-6 if best.size else 1.0]
    curve = [(float(t), float(np.mean(vsm_answers(sim_ref1, sim_ref2, t) == answers)))
             for t in sorted(grid)]
    tau, acc = max(curve, key=lambda ta: (ta[1], -ta[0]))
    return tau, curve


@dataclass
class VsmReport:
    accuracy: float
    positive_accuracy: float
    negative_accuracy: float
    tau: float
    n: int
    answer_counts: dict
    constant_baselines: dict
    sweep: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_similarities(cls, sim_ref1, sim_ref2, answers, tau: float,
                          sweep=None, metadata: dict | None = None) -> "VsmReport":
        answers = np.asarray(answers)
        if answers.size == 0:
            raise DataError("VSM evaluation needs at least one triplet")
        pred = vsm_answers(np.asarray(sim_ref1), np.asarray(sim_ref2), tau)
        correct = pred == answers
        pos = answers != "none"
        return cls(
            accuracy=float(correct.mean()),
            positive_accuracy=float(correct[pos].mean()) if pos.any() else 0.0,
            negative_accuracy=float(correct[~pos].mean()) if (~pos).any() else 0.0,
            tau=float(tau),
            n=int(answers.size),
            answer_counts={a: int((answers == a).sum()) for a in ANSWERS},
            constant_baselines={a: float((answers == a).mean()) for a in ANSWERS},
            sweep=[list(p) for p in (sweep or [])],
            metadata=dict(metadata or {}),
        )

    @property
    def best_constant(self) -> float:
        return max(self.constant_baselines.values())

    def to_dict(self) -> dict:
        return dict(vars(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"
