"""Minibatch training of the unfrozen parameters."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from ..encoder.model import EncoderWeights, classify_logits, predict
from ..errors import DataError, TrainingError
from ..numerics import SeededRng, Tensor, backward, derive_seed, log_softmax, take_last
from .schedule import Adam, TrainingSchedule, clip_global_norm
from .stages import FreezeMask

log = logging.getLogger(__name__)


class LabeledClips(Protocol):
    clips: np.ndarray
    labels: np.ndarray


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-softmax of the true class over a ``(B, K)`` batch."""
    labels = np.asarray(labels, dtype=np.int64)
    k = logits.shape[-1]
    if labels.shape != logits.shape[:1]:
        raise DataError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DataError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    return -take_last(log_softmax(logits), labels).mean()


def accuracy(weights: EncoderWeights, data: LabeledClips, batch_size: int = 64) -> float:
    if len(data.labels) == 0:
        return 0.0
    return float(np.mean(predict(data.clips, weights, batch_size) == data.labels))


@dataclass
class TrainingLog:
    records: list[dict] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [r["loss"] for r in self.records]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def train(weights: EncoderWeights, dataset: LabeledClips, schedule: TrainingSchedule,
          mask: FreezeMask, eval_data: LabeledClips | None = None,
          log_file: str | Path | None = None, checkpoint_every: int = 0,
          checkpoint_dir: str | Path | None = None, step_offset: int = 0) -> TrainingLog:
    """Run ``schedule`` on ``dataset``, updating only parameters in ``mask``.

    Each step logs ``{step, stage, lr, loss}``; the last step of every epoch
    also carries ``eval_acc`` when ``eval_data`` is given. A non-finite loss
    aborts with the step and the batch's shuffle seed.
    """
    n = len(dataset.labels)
    if n == 0:
        raise DataError("training set is empty")
    mask.apply(weights)
    params = {k: p for k, p in weights.named_parameters() if k in mask}
    opt = Adam(schedule.beta1, schedule.beta2, schedule.adam_eps)
    total = schedule.total_steps(n)
    if schedule.warmup_steps > max(total, 1) and schedule.stage == 1:
        log.warning("warmup_steps %d exceeds total steps %d", schedule.warmup_steps, total)
    out = TrainingLog()
    sink = open(log_file, "a", encoding="utf-8") if log_file else None
    step = 0
    try:
        for epoch in range(schedule.epochs):
            shuffle_seed = derive_seed(schedule.seed, f"shuffle/stage{schedule.stage}/epoch{epoch}")
            order = SeededRng(shuffle_seed).permutation(n)
            for start in range(0, n, schedule.batch_size):
                if step >= total:
                    break
                step += 1
                idx = np.sort(order[start:start + schedule.batch_size])
                for p in params.values():
                    p.zero_grad()
                loss = cross_entropy(classify_logits(dataset.clips[idx], weights), dataset.labels[idx])
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingError(
                        f"non-finite loss {value} at stage {schedule.stage} step {step} "
                        f"(epoch {epoch}, batch start {start}, shuffle seed {shuffle_seed})")
                backward(loss)
                clip_global_norm(params, schedule.grad_clip)
                lr = schedule.lr(step)
                opt.step(params, lr)
                rec = {"step": step + step_offset, "stage": schedule.stage, "lr": lr, "loss": value}
                last_of_epoch = start + schedule.batch_size >= n or step >= total
                if last_of_epoch:
                    rec["epoch"] = epoch
                    if eval_data is not None:
                        rec["eval_acc"] = accuracy(weights, eval_data)
                    log.info("stage %d epoch %d step %d loss %.4f%s", schedule.stage, epoch, step,
                             value, f" eval_acc {rec['eval_acc']:.4f}" if "eval_acc" in rec else "")
                out.records.append(rec)
                if sink:
                    sink.write(json.dumps(rec, sort_keys=True) + "\n")
                if checkpoint_every and checkpoint_dir and step % checkpoint_every == 0:
                    from ..encoder.checkpoint import save_checkpoint
                    save_checkpoint(weights, Path(checkpoint_dir) / f"stage{schedule.stage}_step{step}")
            if step >= total:
                break
    finally:
        if sink:
            sink.close()
    return out
