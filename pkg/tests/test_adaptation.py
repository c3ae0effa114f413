from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sta_video.adaptation import (
    Adam,
    FreezeMask,
    LoraAdapter,
    TrainingSchedule,
    attach_lora,
    clip_global_norm,
    cross_entropy,
    default_lora_targets,
    init_stage1,
    stage1_mask,
    stage2_mask,
    train,
)
from sta_video.encoder import EncoderConfig, encode, init_weights
from sta_video.errors import ConfigError, DataError, TrainingError
from sta_video.numerics import Parameter, SeededRng, Tensor

TINY = EncoderConfig(frames=2, height=8, width=8, patch=4, dim=8, blocks=2, spatial_heads=2,
                     head_dim=4, head_scale=0.5, proj_dim=8, num_classes=2)


class Toy:
    """Bright clips are class 1, dark clips class 0: separable by the head alone."""

    def __init__(self, n=64, seed=0):
        rng = SeededRng(seed)
        self.labels = np.arange(n) % 2
        level = np.where(self.labels == 1, 0.8, 0.2)[:, None, None, None, None]
        self.clips = level + rng.uniform(-0.1, 0.1, size=(n, 2, 8, 8, 3))


def snapshot(weights):
    return {k: p.data.copy() for k, p in weights.named_parameters()}


# ---------------------------------------------------------------- losses and schedule

def test_cross_entropy_closed_forms():
    assert abs(cross_entropy(Tensor(np.zeros((1, 2))), [0]).item() - math.log(2)) < 1e-15
    assert cross_entropy(Tensor([[800.0, 0.0]]), [0]).item() < 1e-300


def test_cross_entropy_against_direct_formula():
    z = SeededRng(0).normal(size=(3, 4))
    y = np.array([0, 3, 1])
    direct = np.mean([-z[i, y[i]] + math.log(sum(math.exp(v) for v in z[i])) for i in range(3)])
    assert abs(cross_entropy(Tensor(z), y).item() - direct) < 1e-12


def test_cross_entropy_rejects_bad_label():
    with pytest.raises(DataError):
        cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])


def test_warmup_schedule():
    s = TrainingSchedule(stage=1, warmup_steps=100, base_lr=1e-3)
    assert s.lr(1) == pytest.approx(1e-5)
    assert s.lr(50) == pytest.approx(5e-4)
    assert s.lr(100) == 1e-3 and s.lr(250) == 1e-3
    assert TrainingSchedule(stage=2, warmup_steps=100, base_lr=3e-4).lr(1) == 3e-4


@given(st.integers(1, 400), st.integers(1, 200))
def test_warmup_is_linear_and_capped(step, warmup):
    s = TrainingSchedule(warmup_steps=warmup, base_lr=2.0)
    assert s.lr(step) == pytest.approx(2.0 * min(1.0, step / warmup))


def test_schedule_validation():
    with pytest.raises(ConfigError):
        TrainingSchedule(stage=3)
    with pytest.raises(ConfigError):
        TrainingSchedule(batch_size=0)


def test_global_norm_clipping():
    a, b = Parameter(np.zeros(2)), Parameter(np.zeros(1))
    a.grad[...] = [3.0, 0.0]
    b.grad[...] = [4.0]
    norm = clip_global_norm({"a": a, "b": b}, 1.0)
    assert norm == 5.0
    np.testing.assert_allclose(np.concatenate([a.grad, b.grad]), [0.6, 0.0, 0.8])


def test_adam_first_step_moves_by_lr():
    p = Parameter(np.array([1.0, -1.0]))
    p.grad[...] = [0.5, -2.0]
    Adam().step({"p": p}, 0.1)
    np.testing.assert_allclose(p.data, [0.9, -0.9], atol=1e-7)


# ---------------------------------------------------------------- stages and masks

def test_stage1_trainable_set_enumerates_temporal_and_head():
    w, mask = init_stage1(init_weights(EncoderConfig()))
    expected = {f"blocks.{m}.temporal.{k}" for m in range(4) for k in ("wq", "wk", "wv", "wo")}
    expected |= {f"blocks.{m}.temporal_ln.{k}" for m in range(4) for k in ("gain", "bias")}
    expected |= {"head.weight", "head.bias"}
    assert mask.trainable == expected
    trainable, frozen = mask.partition(w)
    assert trainable + frozen == sum(p.size for p in w.params.values())
    assert all(not w.params[n].data.any() for n in expected if n.endswith("temporal.wo"))


def test_init_stage1_gates_temporal_branch():
    cfg = TINY
    w, _ = init_stage1(init_weights(cfg, zero_temporal_out=False))
    clip = SeededRng(0).uniform(size=(4, 2, 8, 8, 3))
    assert np.array_equal(encode(clip, w).data,
                          encode(clip, w, cfg.replace(temporal_enabled=False)).data)


def test_init_stage1_does_not_touch_input():
    base = init_weights(TINY, zero_temporal_out=False)
    before = snapshot(base)
    init_stage1(base)
    assert all(np.array_equal(before[k], p.data) for k, p in base.named_parameters())


def test_stage2_mask_adds_lora():
    w, _ = init_stage1(init_weights(TINY))
    attach_lora(w)
    m1, m2 = stage1_mask(w), stage2_mask(w)
    lora = {n for n, _ in w.named_parameters() if ".lora_" in n}
    assert lora and m2.trainable == m1.trainable | lora


def test_default_targets_are_frozen_linear_layers():
    w = init_weights(TINY)
    targets = default_lora_targets(w)
    assert "projector.weight" in targets and "blocks.1.mlp.fc2" in targets
    assert not any("temporal" in t or t.startswith("head") for t in targets)


# ---------------------------------------------------------------- LoRA

def test_lora_zero_b_is_bit_exact_identity():
    w = init_weights(TINY, zero_temporal_out=False)
    clip = SeededRng(2).uniform(size=(3, 2, 8, 8, 3))
    before = encode(clip, w).data
    attach_lora(w)
    assert np.array_equal(encode(clip, w).data, before)


def test_lora_param_count_per_target():
    a = LoraAdapter.create("x", 8, 32, 4, 8.0, SeededRng(0))
    assert a.num_parameters == 4 * (8 + 32)
    assert a.scale == 2.0


def test_lora_delta_formula():
    a = LoraAdapter.create("x", 5, 3, 2, 6.0, SeededRng(1))
    a.b.data[...] = SeededRng(2).normal(size=(2, 3))
    x = SeededRng(3).normal(size=(4, 5))
    np.testing.assert_allclose(a.delta(Tensor(x)).data, 3.0 * x @ a.a.data @ a.b.data, atol=1e-14)
    np.testing.assert_allclose(a.merged_delta(), 3.0 * a.a.data @ a.b.data, atol=1e-15)


def test_full_rank_lora_fits_arbitrary_delta():
    target = SeededRng(4).normal(size=(4, 4))
    a = LoraAdapter.create("x", 4, 4, 4, 8.0, SeededRng(5))
    # least-squares oracle for B given the drawn A
    a.b.data[...] = np.linalg.lstsq(a.scale * a.a.data, target, rcond=None)[0]
    np.testing.assert_allclose(a.merged_delta(), target, rtol=0, atol=1e-8)


def test_attach_lora_validation():
    w = init_weights(TINY)
    with pytest.raises(ConfigError):
        attach_lora(w, ["blocks.0.mlp.fc1_bias"])
    with pytest.raises(ConfigError):
        attach_lora(w, ["nope.weight"])
    with pytest.raises(ConfigError):
        attach_lora(w, ["blocks.0.mlp.fc1"], rank=9)
    attach_lora(w, ["blocks.0.mlp.fc1"])
    with pytest.raises(ConfigError):
        attach_lora(w, ["blocks.0.mlp.fc1"])


# ---------------------------------------------------------------- training

def test_zero_lr_step_changes_nothing():
    w, mask = init_stage1(init_weights(TINY))
    before = snapshot(w)
    train(w, Toy(8), TrainingSchedule(epochs=1, base_lr=0.0, max_steps=1), mask)
    assert all(np.array_equal(before[k], p.data) for k, p in w.named_parameters())


def test_stage1_and_stage2_freezing_is_bitwise():
    data = Toy(32)
    w, mask = init_stage1(init_weights(TINY))
    before = snapshot(w)
    train(w, data, TrainingSchedule(epochs=2, batch_size=8, warmup_steps=2), mask)
    for name, p in w.named_parameters():
        if name in mask:
            continue
        assert np.array_equal(before[name], p.data), name
    assert any(not np.array_equal(before[n], w.params[n].data) for n in mask.trainable)

    attach_lora(w, seed=1)
    mid = snapshot(w)
    train(w, data, TrainingSchedule(stage=2, epochs=2, batch_size=8, base_lr=3e-4), stage2_mask(w))
    for target in w.adapters:
        assert np.array_equal(mid[target], w.params[target].data), target
    assert any(w.adapters[t].b.data.any() for t in w.adapters)


def test_loss_decreases_on_separable_toy():
    w, mask = init_stage1(init_weights(TINY, seed=3))
    log = train(w, Toy(64), TrainingSchedule(epochs=40, batch_size=16, warmup_steps=10,
                                             base_lr=1e-2), mask)
    smooth = np.convolve(log.losses, np.ones(10) / 10, mode="valid")
    assert smooth[-1] < 0.1
    assert np.all(np.diff(smooth[::10]) < 0)


def test_training_is_deterministic():
    runs = []
    for _ in range(2):
        w, mask = init_stage1(init_weights(TINY, seed=1))
        runs.append(train(w, Toy(16), TrainingSchedule(epochs=2, batch_size=4), mask).to_jsonl())
    assert runs[0] == runs[1]


def test_log_records_and_file(tmp_path):
    w, mask = init_stage1(init_weights(TINY))
    path = tmp_path / "log.jsonl"
    log = train(w, Toy(16), TrainingSchedule(epochs=2, batch_size=8), mask, eval_data=Toy(8, 1),
                log_file=path)
    lines = [json.loads(s) for s in path.read_text().splitlines()]
    assert lines == log.records and len(lines) == 4
    assert {"step", "stage", "lr", "loss"} <= set(lines[0])
    assert "eval_acc" in lines[1] and "eval_acc" not in lines[0]


def test_periodic_checkpoints(tmp_path):
    w, mask = init_stage1(init_weights(TINY))
    train(w, Toy(16), TrainingSchedule(epochs=1, batch_size=4), mask, checkpoint_every=2,
          checkpoint_dir=tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["stage1_step2", "stage1_step4"]


def test_non_finite_loss_aborts_with_diagnostics():
    w, mask = init_stage1(init_weights(TINY))
    w.params["head.weight"].data[...] = 1e308
    data = Toy(8)
    with np.errstate(all="ignore"), pytest.raises(TrainingError, match=r"step 1 .*shuffle seed \d+"):
        train(w, data, TrainingSchedule(epochs=1, batch_size=4), mask)


def test_empty_dataset_rejected():
    w, mask = init_stage1(init_weights(TINY))
    empty = Toy(2)
    empty.labels, empty.clips = empty.labels[:0], empty.clips[:0]
    with pytest.raises(DataError):
        train(w, empty, TrainingSchedule(), mask)


def test_freeze_mask_membership():
    mask = FreezeMask(frozenset({"a"}))
    assert "a" in mask and "b" not in mask
