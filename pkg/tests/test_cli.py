from __future__ import annotations

import json
import shutil
import subprocess
import sys

import pytest

from sta_video.harness.cli import main


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def run(args, capsys):
    code = main([str(a) for a in args])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_gradcheck_default_passes(tmp_path, capsys):
    code, out, _ = run(["gradcheck", "--out", tmp_path, "--json"], capsys)
    report = json.loads(out)
    assert code == 0 and report["passed"] and report["max_rel_err"] <= 1e-4
    assert json.loads((tmp_path / "gradcheck.json").read_text()) == report


def test_param_count_ratio(capsys):
    code, out, _ = run(["param-count", "--json"], capsys)
    assert code == 0 and json.loads(out)["counts"]["temporal_to_spatial_ratio"] == 0.25


def test_missing_config_exits_one_and_names_path(tmp_path, capsys):
    code, _, err = run(["train", "--config", tmp_path / "absent.json"], capsys)
    assert code == 1 and "absent.json" in err


def test_unknown_config_key_exits_one(tmp_path, tiny_dict, capsys):
    tiny_dict["encoder"]["depth"] = 3
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(tiny_dict))
    code, _, err = run(["param-count", "--config", path], capsys)
    assert code == 1 and "$.encoder" in err and "depth" in err


def test_usage_errors_exit_one(capsys):
    assert run(["nonsense"], capsys)[0] == 1
    assert run(["train", "--bogus"], capsys)[0] == 1
    assert run(["train", "--seed", "-3"], capsys)[0] == 1


def test_unwritable_output_exits_two(tmp_path, tiny_config_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(["gen-data", "--config", tiny_config_path, "--out", blocker / "sub"], capsys)
    assert code == 2 and "runtime error" in err


def test_eval_against_mismatched_data_exits_one(tmp_path, tiny_dict, tiny_config_path, capsys):
    assert run(["train", "--config", tiny_config_path, "--out", tmp_path / "run"], capsys)[0] == 0
    tiny_dict["encoder"]["frames"] = 2
    other = tmp_path / "other.json"
    other.write_text(json.dumps(tiny_dict))
    code, _, err = run(["eval", "--config", other, "--checkpoint", tmp_path / "run" / "checkpoint"],
                       capsys)
    assert code == 1 and "frames" in err


@pytest.mark.parametrize("command", ["gen-data", "gen-vsm", "train", "ablate", "gradcheck",
                                     "param-count"])
def test_rerun_is_byte_identical(command, tmp_path, tiny_config_path, capsys):
    out = tmp_path / "out"
    args = [command, "--config", tiny_config_path, "--out", out, "--json"]
    first_code, first_stdout, _ = run(args, capsys)
    first = tree_bytes(out) if out.exists() else {}
    shutil.rmtree(out, ignore_errors=True)
    second_code, second_stdout, _ = run(args, capsys)
    assert first_code == second_code == 0
    assert first_stdout == second_stdout
    assert first == (tree_bytes(out) if out.exists() else {})


def test_checkpoint_commands_rerun_byte_identical(tmp_path, tiny_config_path, capsys):
    run_dir = tmp_path / "run"
    assert run(["train", "--config", tiny_config_path, "--out", run_dir], capsys)[0] == 0
    ckpt = run_dir / "checkpoint"
    for command, extra in (("eval", []), ("eval-vsm", []), ("eval-vsm", ["--tau", "0.5"]),
                           ("attn-export", ["--block", "0"])):
        out = tmp_path / "out"
        args = [command, "--config", tiny_config_path, "--out", out, "--checkpoint", ckpt,
                "--json", *extra]
        snapshots = []
        for _ in range(2):
            shutil.rmtree(out, ignore_errors=True)
            code, stdout, _ = run(args, capsys)
            assert code == 0, command
            snapshots.append((stdout, tree_bytes(out)))
        assert snapshots[0] == snapshots[1], command
        assert snapshots[0][1], command


def test_attention_export_writes_heatmaps(tmp_path, tiny_config_path, capsys):
    code, out, _ = run(["attn-export", "--config", tiny_config_path, "--out", tmp_path, "--json"],
                       capsys)
    names = {p.name for p in (tmp_path / "attention").iterdir()}
    assert code == 0
    assert {"block0_spatial.csv", "block0_spatial.pgm", "block0_temporal.csv",
            "block0_temporal.pgm"} <= names
    assert json.loads(out)["files"]


def test_installed_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sta_video.harness.cli", "param-count", "--json"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0 and json.loads(proc.stdout)["counts"]["temporal_to_spatial_ratio"] == 0.25
