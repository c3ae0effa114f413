"""End-to-end runs: training, evaluation, similarity matching, ablations."""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np

from ..adaptation import attach_lora, init_stage1, stage2_mask
from ..adaptation.train import TrainingLog, cross_entropy, train
from ..encoder import (
    EncoderWeights,
    check_compatible,
    classify_logits,
    count_parameters,
    embed_clips,
    export_attention_maps,
    init_weights,
    load_checkpoint,
    predict,
    read_manifest,
    save_checkpoint,
)
from ..errors import (
    CompatibilityError,
    ConfigError,
    DataError,
    FileError,
    TrainingError,
    ValidationError,
)
from ..numerics import SeededRng, finite_difference_check
from ..synthvideo import (
    ClipSet,
    Dataset,
    DatasetConfig,
    VsmTriplet,
    draw_spec,
    gen_dataset,
    gen_sample,
    gen_vsm_dataset,
    load_dataset,
    load_vsm_dataset,
)
from .config import ExperimentConfig
from .metrics import EvalReport, VsmReport, sweep_thresholds

log = logging.getLogger(__name__)


@contextmanager
def _where(path: str):
    """Prefix validation and training errors with the config path in play."""
    try:
        yield
    except (ValidationError, TrainingError) as exc:
        if str(exc).startswith(path):
            raise
        raise type(exc)(f"{path}: {exc}") from exc


def write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise FileError(f"could not write {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------- data

def build_dataset(cfg: ExperimentConfig, out_dir: Path | None = None) -> Dataset:
    with _where("$.data"):
        return gen_dataset(cfg.data, cfg.video, cfg.sub_seed("data"), out_dir)


def build_vsm(cfg: ExperimentConfig, split: str = "test") -> list[VsmTriplet]:
    n = cfg.vsm.n if split == "test" else cfg.vsm.n_val
    with _where("$.vsm"):
        return gen_vsm_dataset(n, cfg.vsm.positive_ratio, cfg.video, cfg.sub_seed("vsm"),
                               cfg.vsm, split)


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    weights: EncoderWeights
    report: EvalReport
    log: TrainingLog
    stage1_accuracy: float | None = None


def run_train(cfg: ExperimentConfig, out_dir: str | Path | None = None,
              dataset: Dataset | None = None) -> TrainResult:
    """Stage 1 (temporal blocks and head) then stage 2 (adds LoRA), then test-set evaluation.

    With ``out_dir`` the run writes ``train_log.jsonl``, ``checkpoint/`` and
    ``eval_report.json`` there.
    """
    out = Path(out_dir) if out_dir is not None else None
    ds = dataset if dataset is not None else build_dataset(cfg)
    if tuple(ds.class_names) != tuple(cfg.data.classes):
        raise CompatibilityError(f"dataset classes {list(ds.class_names)} differ from "
                                 f"$.data.classes {list(cfg.data.classes)}")
    log_file = None
    if out is not None:
        log_file = out / "train_log.jsonl"
        write_text(log_file, "")
    eval_data = ds["val"] if cfg.train.eval_each_epoch and len(ds["val"]) else None
    ckpt_dir = out / "checkpoints" if out is not None and cfg.train.checkpoint_every else None

    with _where("$.encoder"):
        weights, mask = init_stage1(init_weights(cfg.encoder, seed=cfg.sub_seed("init")))
    with _where("$.train.stage1"):
        history = train(weights, ds["train"], cfg.train.stage1.schedule(1, cfg.sub_seed("shuffle")),
                        mask, eval_data, log_file, cfg.train.checkpoint_every, ckpt_dir)
    stage1_accuracy = None
    if cfg.train.stage2.epochs > 0:
        stage1_accuracy = evaluate(weights, ds["test"]).accuracy if len(ds["test"]) else None
        lora = cfg.train.lora
        with _where("$.train.lora"):
            attach_lora(weights, list(lora.targets) or None, lora.rank, lora.alpha,
                        cfg.sub_seed("lora"))
        with _where("$.train.stage2"):
            more = train(weights, ds["train"], cfg.train.stage2.schedule(2, cfg.sub_seed("shuffle")),
                         stage2_mask(weights), eval_data, log_file, cfg.train.checkpoint_every,
                         ckpt_dir, step_offset=len(history.records))
        history.records.extend(more.records)

    meta = {"seed": cfg.seed, "split": "test", "stage1_accuracy": stage1_accuracy,
            "steps": len(history.records)}
    report = evaluate(weights, ds["test"], meta)
    if out is not None:
        save_checkpoint(weights, out / "checkpoint", {"class_names": list(ds.class_names),
                                                      "seed": cfg.seed})
        write_text(out / "eval_report.json", report.to_json())
        write_text(out / "config.json", cfg.to_json())
    return TrainResult(weights, report, history, stage1_accuracy)


# ---------------------------------------------------------------- evaluation

def evaluate(weights: EncoderWeights, data: ClipSet, metadata: dict | None = None) -> EvalReport:
    c = weights.config
    if data.clips.ndim != 5:
        raise CompatibilityError(f"expected a (B, T, H, W, C) clip stack, got {data.clips.shape}")
    check_compatible(c, *data.clips.shape[1:], num_classes=len(data.class_names))
    pred = predict(data.clips, weights)
    return EvalReport.from_predictions(data.labels, pred, data.class_names, metadata)


def _load_weights(checkpoint) -> tuple[EncoderWeights, list[str] | None]:
    if isinstance(checkpoint, EncoderWeights):
        return checkpoint, None
    weights = load_checkpoint(checkpoint)
    names = read_manifest(checkpoint).get("extra", {}).get("class_names")
    return weights, names


def run_eval(checkpoint: EncoderWeights | str | Path, data: ClipSet | Dataset | str | Path,
             split: str = "test") -> EvalReport:
    """Argmax classification report for one split; raises on config/data mismatch."""
    weights, ckpt_classes = _load_weights(checkpoint)
    if isinstance(data, (str, Path)):
        data = load_dataset(data)
    clipset = data[split] if isinstance(data, Dataset) else data
    if ckpt_classes is not None and list(ckpt_classes) != list(clipset.class_names):
        raise CompatibilityError(f"checkpoint classes {ckpt_classes} differ from dataset classes "
                                 f"{list(clipset.class_names)}")
    try:
        return evaluate(weights, clipset, {"split": split})
    except CompatibilityError as exc:
        raise CompatibilityError(f"{exc}; checkpoint config: {weights.config.to_dict()}") from None


def triplet_similarities(weights: EncoderWeights, triplets: Sequence[VsmTriplet]):
    if not triplets:
        raise DataError("VSM evaluation needs at least one triplet")
    emb = {role: embed_clips(np.stack([getattr(t, role).clip for t in triplets]), weights)
           for role in ("ref1", "ref2", "query")}
    s1 = np.sum(emb["query"] * emb["ref1"], axis=-1)
    s2 = np.sum(emb["query"] * emb["ref2"], axis=-1)
    return s1, s2, np.array([t.answer for t in triplets])


def run_vsm_eval(checkpoint: EncoderWeights | str | Path, triplets: Sequence[VsmTriplet] | str | Path,
                 tau: float | None = None, val_triplets: Sequence[VsmTriplet] | None = None,
                 grid: Sequence[float] | None = None) -> VsmReport:
    """Cosine-similarity matching; ``tau=None`` sweeps thresholds on ``val_triplets``."""
    weights, _ = _load_weights(checkpoint)
    if isinstance(triplets, (str, Path)):
        triplets, _ = load_vsm_dataset(triplets)
    sweep = []
    if tau is None:
        if not val_triplets:
            raise ConfigError("a threshold sweep needs validation triplets (or pass tau)")
        tau, sweep = sweep_thresholds(*triplet_similarities(weights, val_triplets), grid)
    s1, s2, answers = triplet_similarities(weights, triplets)
    meta = {"tau_source": "sweep" if sweep else "fixed"}
    return VsmReport.from_similarities(s1, s2, answers, tau, sweep, meta)


# ---------------------------------------------------------------- ablation

ABLATION_COLUMNS = ("temporal_order", "head_scale", "sta_placement", "n_seeds", "mean_acc", "std_acc")


@dataclass
class AblationResult:
    rows: list[dict]
    seeds: tuple[int, ...]
    reference: str = ("full-scale reference (not asserted): spatial_first with head_scale 0.25 "
                      "ranked best at 76.04")
    per_seed: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = list(ABLATION_COLUMNS) + [f"acc_seed_{s}" for s in self.seeds]
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: row[k] for k in cols})
        return buf.getvalue()

    def render(self) -> str:
        scales = sorted({r["head_scale"] for r in self.rows}, reverse=True)
        keys = sorted({(r["temporal_order"], r["sta_placement"]) for r in self.rows},
                      key=lambda k: [(r["temporal_order"], r["sta_placement"]) for r in self.rows].index(k))
        cell = {(r["temporal_order"], r["sta_placement"], r["head_scale"]): r for r in self.rows}
        head = ["order", "placement"] + [f"scale {s:g}" for s in scales]
        body = []
        for order, placement in keys:
            vals = []
            for s in scales:
                r = cell.get((order, placement, s))
                vals.append(f"{100 * r['mean_acc']:.2f} ± {100 * r['std_acc']:.2f}" if r else "-")
            body.append([order, placement] + vals)
        widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
        fmt = lambda row: " | ".join(str(x).ljust(w) for x, w in zip(row, widths))
        lines = [fmt(head), "-+-".join("-" * w for w in widths)] + [fmt(r) for r in body]
        lines.append(f"accuracy (%) mean ± std over seeds {list(self.seeds)}")
        lines.append(self.reference)
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows, "seeds": list(self.seeds)}, indent=1,
                          sort_keys=True) + "\n"


def ablation_cells(cfg: ExperimentConfig) -> list[tuple[str, float, str]]:
    ax = cfg.ablation
    return list(product(ax.temporal_order, ax.head_scale, ax.sta_placement))


def run_ablation(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                 dataset: Dataset | None = None) -> AblationResult:
    """Train every grid cell under each seed on one shared dataset."""
    ds = dataset if dataset is not None else build_dataset(cfg)
    cells = ablation_cells(cfg)
    jobs = []
    for order, scale, placement in cells:
        with _where("$.ablation"):
            enc = cfg.encoder.replace(temporal_order=order, head_scale=scale, sta_placement=placement)
        for seed in cfg.ablation.seeds:
            jobs.append(cfg.replace(encoder=enc, seed=seed))
    if cfg.ablation.workers > 1:
        # workers regenerate the shared dataset from its seed instead of receiving it
        shared = cfg.to_dict()
        with ProcessPoolExecutor(cfg.ablation.workers) as pool:
            accs = list(pool.map(_shared_data_job, [j.to_dict() for j in jobs], [shared] * len(jobs)))
    else:
        accs = [run_train(j, dataset=ds).report.accuracy for j in jobs]
    rows, n = [], len(cfg.ablation.seeds)
    for i, (order, scale, placement) in enumerate(cells):
        vals = np.array(accs[i * n:(i + 1) * n])
        row = {"temporal_order": order, "head_scale": scale, "sta_placement": placement,
               "n_seeds": n, "mean_acc": float(vals.mean()),
               "std_acc": float(vals.std(ddof=1)) if n > 1 else 0.0}
        row.update({f"acc_seed_{s}": float(v) for s, v in zip(cfg.ablation.seeds, vals)})
        rows.append(row)
    result = AblationResult(rows, tuple(cfg.ablation.seeds))
    if out_dir is not None:
        out = Path(out_dir)
        write_text(out / "ablation.csv", result.to_csv())
        write_text(out / "ablation.txt", result.render())
        write_text(out / "ablation.json", result.to_json())
    return result


def _shared_data_job(job_dict: dict, data_cfg_dict: dict) -> float:
    data_cfg = ExperimentConfig.from_dict(data_cfg_dict)
    return run_train(ExperimentConfig.from_dict(job_dict), dataset=build_dataset(data_cfg)).report.accuracy


# ---------------------------------------------------------------- diagnostics

def run_gradcheck(cfg: ExperimentConfig, strict: bool = False) -> dict:
    """Finite-difference check of every parameter group of the small encoder.

    The temporal output projection and the LoRA ``B`` factors are drawn
    nonzero so every group carries a live gradient.
    """
    gc = cfg.gradcheck
    seed = cfg.sub_seed("gradcheck")
    with _where("$.gradcheck.encoder"):
        weights = init_weights(gc.encoder, seed=seed, zero_temporal_out=False)
        attach_lora(weights, rank=min(4, gc.encoder.head_dim), seed=seed)
    rng = SeededRng(seed).child("inputs")
    for adapter in weights.adapters.values():
        adapter.b.data[...] = rng.normal(0.0, 0.1, size=adapter.b.shape)
    e = gc.encoder
    clips = rng.uniform(0.0, 1.0, size=(gc.batch, e.frames, e.height, e.width, e.channels))
    labels = rng.integers(0, e.num_classes, size=gc.batch)

    def loss():
        return cross_entropy(classify_logits(clips, weights), labels)

    report = finite_difference_check(loss, weights.all_parameters(), gc.tolerance, gc.step,
                                     gc.coords_per_param, seed, strict=strict)
    return report.to_dict()


def parameter_report(cfg: ExperimentConfig) -> dict:
    with _where("$.encoder"):
        weights = init_weights(cfg.encoder, seed=0)
    counts = count_parameters(weights)
    e = cfg.encoder
    return {"counts": counts, "temporal_heads": e.temporal_heads, "temporal_dim": e.temporal_dim,
            "spatial_heads": e.spatial_heads, "head_scale": e.head_scale,
            "temporal_blocks": list(e.placement)}


def run_attention_export(cfg: ExperimentConfig, weights: EncoderWeights, block_index: int,
                         action: str, out_dir: str | Path) -> dict:
    with _where("$.data"):
        data_cfg = DatasetConfig(classes=(action,), size=cfg.data.size, speeds=cfg.data.speeds,
                                 noise=cfg.data.noise, background=cfg.data.background)
    rng = SeededRng(cfg.sub_seed(f"attn/{action}"))
    sample = gen_sample(draw_spec(action, data_cfg, cfg.video, rng), cfg.video,
                        cfg.sub_seed(f"attn/{action}/noise"), 0, (action,))
    with _where("attn-export"):
        files = export_attention_maps(sample.clip, weights, block_index, out_dir)
    return {"action": action, "block": block_index, "files": sorted(files),
            "start_offset": list(sample.spec.start_offset)}
