"""``sta-video`` command line.

Exit codes: 0 success, 1 validation error (bad config, flags, shapes,
data), 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from ..encoder import init_weights, load_checkpoint
from ..errors import StaError, ValidationError
from ..synthvideo import write_vsm_dataset
from . import runner
from .config import ExperimentConfig, load_config

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed {text} is not an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sta-video", description="Stacked temporal attention experiments "
                                                   "on synthetic mirrored-motion videos.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="experiment config JSON (defaults if omitted)")
        p.add_argument("--seed", type=_u64, help="master seed; overrides the config")
        p.add_argument("--out", type=Path, help="output directory; overrides the config")
        p.add_argument("--json", action="store_true", help="print the report as JSON")
        return p

    command("gen-data", "render train/val/test clips and a manifest")
    command("gen-vsm", "render similarity-matching triplets (val and test)")
    command("train", "two-stage training followed by test evaluation")
    p = command("eval", "classification report for a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, help="dataset directory (generated from the config if omitted)")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p = command("eval-vsm", "similarity matching with a swept or fixed threshold")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--tau", type=float, help="fixed threshold; swept on the val triplets if omitted")
    command("ablate", "train the temporal_order x head_scale x placement grid")
    command("gradcheck", "finite-difference check of the small encoder")
    p = command("attn-export", "write attention heatmaps for one clip")
    p.add_argument("--checkpoint", type=Path, help="weights to inspect (fresh init if omitted)")
    p.add_argument("--block", type=int, default=0)
    p.add_argument("--action", help="action class of the rendered clip (first config class if omitted)")
    command("param-count", "parameter counts per component")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.out is not None:
        cfg = cfg.replace(out_dir=str(args.out))
    return cfg


def _emit(args, report: dict, summary: str, out: Path | None = None, name: str | None = None) -> None:
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if out is not None and name:
        runner.write_text(out / name, text)
    print(text if args.json else summary, end="" if args.json else "\n")


def dispatch(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.out_dir)
    cmd = args.command

    if cmd == "gen-data":
        ds = runner.build_dataset(cfg, out / "data")
        counts = {k: len(v) for k, v in ds.splits.items()}
        _emit(args, {"classes": list(ds.class_names), "counts": counts, "path": "data"},
              f"wrote {sum(counts.values())} clips to {out / 'data'}", out, "gen_data.json")
    elif cmd == "gen-vsm":
        counts = {}
        for split in ("val", "test"):
            triplets = runner.build_vsm(cfg, split)
            write_vsm_dataset(triplets, out / "vsm" / split, cfg.vsm.classes)
            counts[split] = {a: sum(t.answer == a for t in triplets) for a in ("ref1", "ref2", "none")}
        _emit(args, {"counts": counts, "path": "vsm"}, f"wrote triplets to {out / 'vsm'}",
              out, "gen_vsm.json")
    elif cmd == "train":
        result = runner.run_train(cfg, out)
        _emit(args, result.report.to_dict(), result.report.render())
    elif cmd == "eval":
        data = args.data if args.data else runner.build_dataset(cfg)
        report = runner.run_eval(args.checkpoint, data, args.split)
        _emit(args, report.to_dict(), report.render(), out, "eval_report.json")
    elif cmd == "eval-vsm":
        weights = load_checkpoint(args.checkpoint)
        val = runner.build_vsm(cfg, "val") if args.tau is None else None
        report = runner.run_vsm_eval(weights, runner.build_vsm(cfg, "test"), args.tau, val,
                                     cfg.vsm.tau_grid or None)
        _emit(args, report.to_dict(),
              f"vsm accuracy {report.accuracy:.4f} (tau {report.tau:.6g}; best constant "
              f"{report.best_constant:.4f})", out, "vsm_report.json")
    elif cmd == "ablate":
        result = runner.run_ablation(cfg, out)
        _emit(args, json.loads(result.to_json()), result.render().rstrip("\n"))
    elif cmd == "gradcheck":
        report = runner.run_gradcheck(cfg)
        _emit(args, report, f"gradcheck {'passed' if report['passed'] else 'FAILED'}: max rel err "
              f"{report['max_rel_err']:.3e} over {report['coords_checked']} coordinates",
              out, "gradcheck.json")
        return EXIT_OK if report["passed"] else EXIT_RUNTIME
    elif cmd == "attn-export":
        weights = (load_checkpoint(args.checkpoint) if args.checkpoint
                   else init_weights(cfg.encoder, seed=cfg.sub_seed("init")))
        action = args.action or cfg.data.classes[0]
        report = runner.run_attention_export(cfg, weights, args.block, action, out / "attention")
        _emit(args, report, f"wrote {len(report['files'])} files to {out / 'attention'}")
    elif cmd == "param-count":
        report = runner.parameter_report(cfg)
        c = report["counts"]
        _emit(args, report, "\n".join(f"{k:>26}: {v}" for k, v in c.items()))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (StaError, OSError, RuntimeError, MemoryError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
