from __future__ import annotations

import json

import pytest
from hypothesis import settings

# single-core sandbox timings are noisy; correctness, not latency, is under test
settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")

TINY_EXPERIMENT = {
    "encoder": {"frames": 4, "height": 16, "width": 16, "patch": 8, "dim": 8, "blocks": 1,
                "spatial_heads": 2, "head_dim": 4, "head_scale": 0.5, "proj_dim": 8,
                "num_classes": 2},
    "data": {"classes": ["move_left_to_right", "move_right_to_left"], "train_per_class": 8,
             "val_per_class": 2, "test_per_class": 4, "size": 4, "noise": 0.0},
    "train": {"stage1": {"epochs": 1, "batch_size": 8, "warmup_steps": 2},
              "stage2": {"epochs": 1, "batch_size": 8, "base_lr": 3e-4, "warmup_steps": 0}},
    "vsm": {"n": 10, "n_val": 10, "size": 4,
            "classes": ["move_left_to_right", "move_right_to_left", "move_top_to_bottom",
                        "move_bottom_to_top"]},
    "ablation": {"temporal_order": ["spatial_first"], "head_scale": [0.5],
                 "sta_placement": ["all", "none"], "seeds": [0, 1, 2]},
    "seed": 5,
}


@pytest.fixture
def tiny_dict():
    return json.loads(json.dumps(TINY_EXPERIMENT))


@pytest.fixture
def tiny_config_path(tmp_path, tiny_dict):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_dict))
    return path


# ---------------------------------------------------------------- acceptance reporting

ACCEPTANCE_COUNT = 10
_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criterion")


@pytest.fixture
def record_criterion(request):
    """Record one pass/fail line for an acceptance criterion; returns ``passed``."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        lines[number] = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}: {title} | {detail}"
        print(lines[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, ACCEPTANCE_COUNT + 1):
        terminalreporter.write_line(lines.get(number, f"criterion {number:>2} NOT RUN"))
