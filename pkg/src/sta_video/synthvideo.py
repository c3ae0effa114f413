"""Synthetic videos of moving squares in temporally mirrored class pairs.

Every class has a partner whose clips are its clips played backwards, so a
pair shares frame content exactly and differs only in temporal order:

=====================  =====================  ===================================
class                  mirror                 canonical motion
=====================  =====================  ===================================
move_left_to_right     move_right_to_left     constant horizontal velocity
move_top_to_bottom     move_bottom_to_top     constant vertical velocity
fall_then_rest         rise_then_rest         accelerating drop, then resting on
                                              the floor; the mirror rests on the
                                              floor, then rises decelerating
approach               recede                 square slides toward a static
                                              reference square
grow                   shrink                 square grows about a fixed center
=====================  =====================  ===================================

Frames are grayscale in ``[0, 1]`` (plus optional uniform noise), replicated
over channels. ``start_offset`` is the object's top-left ``(row, col)`` at
frame 0 for the four translation classes; for the other classes it is the
anchor of the canonical (first-listed) motion, shared with the mirror.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from ._dataclass_io import from_dict, to_dict
from .errors import ConfigError, DataError, FileError, SpecError
from .numerics import SeededRng, derive_seed, load_tensor, save_tensor

CLASSES = (
    "move_left_to_right", "move_right_to_left",
    "move_top_to_bottom", "move_bottom_to_top",
    "fall_then_rest", "rise_then_rest",
    "approach", "recede",
    "grow", "shrink",
)
MIRROR = {a: b for a, b in zip(CLASSES[0::2], CLASSES[1::2])}
MIRROR.update({b: a for a, b in list(MIRROR.items())})

REFERENCE_GAP = 2
REFERENCE_INTENSITY = 1.0
OBJECT_INTENSITY = 1.0


def mirror_class(name: str) -> str:
    try:
        return MIRROR[name]
    except KeyError:
        raise ConfigError(f"unknown action class {name!r}") from None


@dataclass(frozen=True)
class VideoConfig:
    frames: int = 8
    height: int = 32
    width: int = 32
    channels: int = 3

    def __post_init__(self):
        if min(self.frames, self.height, self.width, self.channels) < 1:
            raise ConfigError("video extents must be positive")


@dataclass(frozen=True)
class MotionSpec:
    action: str
    size: int = 6
    speed: int = 2
    start_offset: tuple[int, int] = (0, 0)
    noise: float = 0.0
    background: float = 0.0

    def __post_init__(self):
        if self.action not in MIRROR:
            raise ConfigError(f"unknown action class {self.action!r}")
        if self.size < 1 or self.speed < 0 or self.noise < 0:
            raise SpecError(f"invalid motion spec {self}")


@dataclass(frozen=True)
class Box:
    row: int
    col: int
    size: int
    intensity: float = OBJECT_INTENSITY


def _fall_rows(row0: int, speed: int, floor: int, frames: int) -> list[int]:
    return [min(row0 + speed * t * (t + 1) // 2, floor) for t in range(frames)]


def _canonical(spec: MotionSpec, video: VideoConfig) -> list[list[Box]]:
    """Boxes per frame for the forward-time member of the class pair."""
    r, c = spec.start_offset
    s, v, T = spec.size, spec.speed, video.frames
    base = spec.action if spec.action in CLASSES[0::2] else MIRROR[spec.action]
    if base == "move_left_to_right":
        return [[Box(r, c + v * t, s)] for t in range(T)]
    if base == "move_top_to_bottom":
        return [[Box(r + v * t, c, s)] for t in range(T)]
    if base == "fall_then_rest":
        return [[Box(row, c, s)] for row in _fall_rows(r, v, video.height - s, T)]
    if base == "approach":
        ref = Box(r, c + v * (T - 1) + s + REFERENCE_GAP, s, REFERENCE_INTENSITY)
        return [[Box(r, c + v * t, s), ref] for t in range(T)]
    if base == "grow":
        return [[Box(r - (v * t) // 2, c - (v * t) // 2, s + v * t)] for t in range(T)]
    raise AssertionError(base)


def trajectory(spec: MotionSpec, video: VideoConfig) -> list[list[Box]]:
    """Boxes per frame; mirror classes replay their partner backwards."""
    if spec.action in ("move_right_to_left", "move_bottom_to_top"):
        # start_offset is the frame-0 position, so shift to the partner's frame-0 position
        r, c = spec.start_offset
        travel = spec.speed * (video.frames - 1)
        if spec.action == "move_right_to_left":
            partner = replace(spec, action="move_left_to_right", start_offset=(r, c - travel))
        else:
            partner = replace(spec, action="move_top_to_bottom", start_offset=(r - travel, c))
        return _canonical(partner, video)[::-1]
    frames = _canonical(spec, video)
    return frames if spec.action in CLASSES[0::2] else frames[::-1]


def mirror_spec(spec: MotionSpec, video: VideoConfig) -> MotionSpec:
    """The spec whose noise-free clip is ``spec``'s clip reversed in time."""
    partner = mirror_class(spec.action)
    r, c = spec.start_offset
    travel = spec.speed * (video.frames - 1)
    offsets = {
        "move_left_to_right": (r, c + travel),
        "move_right_to_left": (r, c - travel),
        "move_top_to_bottom": (r + travel, c),
        "move_bottom_to_top": (r - travel, c),
    }
    return replace(spec, action=partner, start_offset=offsets.get(spec.action, spec.start_offset))


def in_bounds(spec: MotionSpec, video: VideoConfig) -> bool:
    for boxes in trajectory(spec, video):
        for b in boxes:
            if b.row < 0 or b.col < 0 or b.row + b.size > video.height or b.col + b.size > video.width:
                return False
    return True


@lru_cache(maxsize=None)
def valid_offsets(action: str, size: int, speed: int, video: VideoConfig) -> tuple[tuple[int, int], ...]:
    """Every start offset whose whole trajectory stays on the canvas."""
    falls = action in ("fall_then_rest", "rise_then_rest")
    out = []
    for r in range(video.height):
        for c in range(video.width):
            if falls and speed and r >= video.height - size:
                continue  # already resting: indistinguishable from its mirror
            if in_bounds(MotionSpec(action, size, speed, (r, c)), video):
                out.append((r, c))
    return tuple(out)


def render(spec: MotionSpec, video: VideoConfig, seed: int = 0) -> np.ndarray:
    """``(T, H, W, C)`` float64 clip; deterministic in ``(spec, video, seed)``."""
    if not in_bounds(spec, video):
        raise SpecError(f"trajectory of {spec} leaves the {video.height}x{video.width} frame")
    T, H, W = video.frames, video.height, video.width
    frames = np.full((T, H, W), float(spec.background))
    for t, boxes in enumerate(trajectory(spec, video)):
        for b in boxes:
            frames[t, b.row:b.row + b.size, b.col:b.col + b.size] = b.intensity
    if spec.noise > 0:
        frames += SeededRng(seed).uniform(-spec.noise, spec.noise, size=frames.shape)
    return np.repeat(frames[..., None], video.channels, axis=-1)


def centroids(clip: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Per-frame (col, row) centroid of pixels above ``threshold``."""
    out = []
    for frame in np.asarray(clip)[..., 0]:
        rows, cols = np.nonzero(frame > threshold)
        out.append((cols.mean(), rows.mean()))
    return np.array(out)


# ---------------------------------------------------------------- samples

@dataclass(frozen=True)
class VideoSample:
    clip: np.ndarray = field(repr=False, compare=False)
    label: int
    spec: MotionSpec
    seed: int


def gen_sample(spec: MotionSpec, video: VideoConfig, seed: int, label: int | None = None,
               classes: Sequence[str] = CLASSES) -> VideoSample:
    if label is None:
        label = list(classes).index(spec.action) if spec.action in classes else -1
    return VideoSample(render(spec, video, seed), label, spec, int(seed))


@dataclass(frozen=True)
class DatasetConfig:
    classes: tuple[str, ...] = ("move_left_to_right", "move_right_to_left")
    train_per_class: int = 1000
    val_per_class: int = 50
    test_per_class: int = 250
    size: int = 6
    speeds: tuple[int, ...] = (2,)
    noise: float = 0.05
    background: tuple[float, float] = (0.0, 0.2)
    # relative class frequencies; empty = balanced
    frequencies: tuple[float, ...] = ()
    # render mirror partners from shared draws so each split is closed under time reversal
    mirror_paired: bool = True

    def __post_init__(self):
        if not self.classes:
            raise ConfigError("data.classes must not be empty")
        for c in self.classes:
            mirror_class(c)
        if len(set(self.classes)) != len(self.classes):
            raise ConfigError("data.classes contains duplicates")
        if self.train_per_class < 1 or self.val_per_class < 0 or self.test_per_class < 0:
            raise ConfigError("per-class counts must be >= 1 (train) and >= 0 (val, test)")
        if not self.speeds or min(self.speeds) < 0:
            raise ConfigError("data.speeds must be a non-empty list of non-negative ints")
        if self.frequencies and len(self.frequencies) != len(self.classes):
            raise ConfigError("data.frequencies must have one entry per class")
        if self.frequencies and (min(self.frequencies) <= 0):
            raise ConfigError("data.frequencies must be positive")
        lo, hi = self.background
        if not 0 <= lo <= hi:
            raise ConfigError("data.background must be an ordered [low, high] range")

    @classmethod
    def from_dict(cls, data: dict, where: str = "$.data") -> "DatasetConfig":
        return from_dict(cls, data, where)


@dataclass
class ClipSet:
    """One split: stacked clips, integer labels and the generating specs."""

    clips: np.ndarray
    labels: np.ndarray
    specs: list[MotionSpec]
    seeds: list[int]
    class_names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class Dataset:
    splits: dict[str, ClipSet]
    class_names: tuple[str, ...]
    manifest: list[dict]

    def __getitem__(self, split: str) -> ClipSet:
        return self.splits[split]


def _split_counts(cfg: DatasetConfig, per_class: int) -> list[int]:
    k = len(cfg.classes)
    if not cfg.frequencies:
        return [per_class] * k
    total = per_class * k
    freq = np.asarray(cfg.frequencies, dtype=np.float64)
    raw = freq / freq.sum() * total
    counts = np.floor(raw).astype(int)
    # largest remainder, ties broken by class order
    for i in np.argsort(-(raw - counts), kind="stable")[: total - counts.sum()]:
        counts[i] += 1
    return [max(1, int(c)) if per_class else 0 for c in counts]


def draw_spec(action: str, cfg: DatasetConfig, video: VideoConfig, rng: SeededRng) -> MotionSpec:
    speed = int(cfg.speeds[int(rng.integers(0, len(cfg.speeds)))])
    offsets = valid_offsets(action, cfg.size, speed, video)
    if not offsets:
        raise SpecError(f"no start offset keeps {action} (size {cfg.size}, speed {speed}) on the canvas")
    start = offsets[int(rng.integers(0, len(offsets)))]
    lo, hi = cfg.background
    background = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    return MotionSpec(action, cfg.size, speed, tuple(int(v) for v in start), cfg.noise, background)


def _gen_split(split: str, cfg: DatasetConfig, video: VideoConfig, seed: int,
               per_class: int) -> tuple[ClipSet, list[dict]]:
    counts = _split_counts(cfg, per_class)
    specs: list[MotionSpec] = []
    labels: list[int] = []
    seeds: list[int] = []
    for label, action in enumerate(cfg.classes):
        partner = MIRROR[action]
        canonical = action in CLASSES[0::2]
        # a mirror-paired class reuses its partner's draws so the split is closed under reversal
        paired = cfg.mirror_paired and partner in cfg.classes and not canonical
        draw_action = partner if paired else action
        for i in range(counts[label]):
            key = f"{split}/{draw_action}/{i}"
            spec = draw_spec(draw_action, cfg, video, SeededRng(derive_seed(seed, "spec/" + key)))
            if paired:
                spec = mirror_spec(spec, video)
            specs.append(spec)
            labels.append(label)
            seeds.append(derive_seed(seed, f"noise/{split}/{action}/{i}"))
    clips = np.stack([render(s, video, sd) for s, sd in zip(specs, seeds)]) if specs else \
        np.zeros((0, video.frames, video.height, video.width, video.channels))
    entries = [{"split": split, "file": f"{split}/{j:06d}.f64", "label": lab,
                "class_name": cfg.classes[lab], "seed": sd, "spec": to_dict(sp)}
               for j, (lab, sd, sp) in enumerate(zip(labels, seeds, specs))]
    clipset = ClipSet(clips, np.asarray(labels, dtype=np.int64), specs, seeds, tuple(cfg.classes))
    return clipset, entries


def gen_dataset(cfg: DatasetConfig, video: VideoConfig, seed: int,
                out_dir: str | os.PathLike | None = None) -> Dataset:
    """Generate train/val/test splits; each split draws from its own seed stream."""
    splits, manifest = {}, []
    for split, per_class in (("train", cfg.train_per_class), ("val", cfg.val_per_class),
                             ("test", cfg.test_per_class)):
        clipset, entries = _gen_split(split, cfg, video, seed, per_class)
        splits[split] = clipset
        manifest.extend(entries)
    ds = Dataset(splits, tuple(cfg.classes), manifest)
    if out_dir is not None:
        write_dataset(ds, out_dir, cfg, video, seed)
    return ds


def write_dataset(ds: Dataset, out_dir, cfg: DatasetConfig, video: VideoConfig, seed: int) -> None:
    root = Path(out_dir)
    try:
        for split, clipset in ds.splits.items():
            (root / split).mkdir(parents=True, exist_ok=True)
        entries = iter(ds.manifest)
        for split, clipset in ds.splits.items():
            for clip in clipset.clips:
                save_tensor(root / next(entries)["file"], clip)
        doc = {"classes": list(ds.class_names), "seed": seed, "video": to_dict(video),
               "data": to_dict(cfg), "samples": ds.manifest}
        (root / "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise FileError(f"could not write dataset to {root}: {exc}") from exc


def load_dataset(path: str | os.PathLike) -> Dataset:
    root = Path(path)
    try:
        doc = json.loads((root / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read dataset manifest in {root}: {exc}") from exc
    classes = tuple(doc["classes"])
    splits = {}
    for split in ("train", "val", "test"):
        rows = [e for e in doc["samples"] if e["split"] == split]
        clips = [load_tensor(root / e["file"]) for e in rows]
        video = from_dict(VideoConfig, doc["video"], "$.video")
        arr = np.stack(clips) if clips else np.zeros((0, video.frames, video.height, video.width,
                                                     video.channels))
        specs = [from_dict(MotionSpec, e["spec"], "$.spec") for e in rows]
        splits[split] = ClipSet(arr, np.asarray([e["label"] for e in rows], dtype=np.int64),
                                specs, [e["seed"] for e in rows], classes)
    return Dataset(splits, classes, doc["samples"])


# ---------------------------------------------------------------- similarity triplets

ANSWERS = ("ref1", "ref2", "none")


@dataclass
class VsmTriplet:
    ref1: VideoSample
    ref2: VideoSample
    query: VideoSample
    answer: str


@dataclass(frozen=True)
class VsmConfig:
    n: int = 1000
    n_val: int = 300
    positive_ratio: float = 0.8
    classes: tuple[str, ...] = CLASSES
    size: int = 6
    speeds: tuple[int, ...] = (2,)
    noise: float = 0.0
    background: tuple[float, float] = (0.0, 0.2)
    tau_grid: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.positive_ratio <= 1.0:
            raise ConfigError(f"positive_ratio must lie in [0, 1], got {self.positive_ratio}")
        if len(set(self.classes)) < 3 and self.positive_ratio < 1.0:
            raise ConfigError("negative triplets need at least 3 distinct classes")
        if len(set(self.classes)) < 2:
            raise ConfigError("triplets need at least 2 distinct classes")

    @classmethod
    def from_dict(cls, data: dict, where: str = "$.vsm") -> "VsmConfig":
        return from_dict(cls, data, where)


def answer_plan(n: int, positive_ratio: float) -> list[str]:
    """Exact answer composition before shuffling: positives split evenly."""
    n_pos = int(round(positive_ratio * n))
    n_ref1 = (n_pos + 1) // 2
    return ["ref1"] * n_ref1 + ["ref2"] * (n_pos - n_ref1) + ["none"] * (n - n_pos)


def gen_vsm_dataset(n: int, positive_ratio: float, video: VideoConfig, seed: int,
                    cfg: VsmConfig | None = None, split: str = "test") -> list[VsmTriplet]:
    """Triplets of two references with distinct actions and a query.

    Each clip gets an independent seed stream keyed by its role, so a query
    never shares randomness with its references.
    """
    cfg = cfg or VsmConfig(n=n, positive_ratio=positive_ratio)
    if not 0.0 <= positive_ratio <= 1.0:
        raise ConfigError(f"positive_ratio must lie in [0, 1], got {positive_ratio}")
    classes = list(cfg.classes)
    data_cfg = DatasetConfig(classes=tuple(classes), size=cfg.size, speeds=cfg.speeds,
                             noise=cfg.noise, background=cfg.background, mirror_paired=False)
    plan = answer_plan(n, positive_ratio)
    order = SeededRng(derive_seed(seed, f"vsm/{split}/order")).permutation(n)
    triplets = []
    for i, slot in enumerate(order):
        answer = plan[slot]
        rng = SeededRng(derive_seed(seed, f"vsm/{split}/{i}/labels"))
        c1, c2 = (int(v) for v in rng.choice(len(classes), size=2, replace=False))
        if answer == "ref1":
            cq = c1
        elif answer == "ref2":
            cq = c2
        else:
            rest = [k for k in range(len(classes)) if k not in (c1, c2)]
            cq = rest[int(rng.integers(0, len(rest)))]

        def sample(role: str, label: int) -> VideoSample:
            key = f"vsm/{split}/{i}/{role}"
            spec = draw_spec(classes[label], data_cfg, video, SeededRng(derive_seed(seed, key + "/spec")))
            return gen_sample(spec, video, derive_seed(seed, key + "/noise"), label, classes)

        triplets.append(VsmTriplet(sample("ref1", c1), sample("ref2", c2), sample("query", cq), answer))
    return triplets


def write_vsm_dataset(triplets: list[VsmTriplet], out_dir, classes: Sequence[str]) -> None:
    root = Path(out_dir)
    try:
        (root / "clips").mkdir(parents=True, exist_ok=True)
        manifest = []
        for i, tr in enumerate(triplets):
            entry = {"answer": tr.answer}
            for role in ("ref1", "ref2", "query"):
                s: VideoSample = getattr(tr, role)
                fname = f"clips/{i:06d}_{role}.f64"
                save_tensor(root / fname, s.clip)
                entry[role] = {"file": fname, "label": s.label, "class_name": classes[s.label],
                               "seed": s.seed, "spec": to_dict(s.spec)}
            manifest.append(entry)
        doc = {"classes": list(classes), "triplets": manifest}
        (root / "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise FileError(f"could not write VSM dataset to {root}: {exc}") from exc


def load_vsm_dataset(path) -> tuple[list[VsmTriplet], tuple[str, ...]]:
    root = Path(path)
    try:
        doc = json.loads((root / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read VSM manifest in {root}: {exc}") from exc
    out = []
    for e in doc["triplets"]:
        parts = {}
        for role in ("ref1", "ref2", "query"):
            r = e[role]
            parts[role] = VideoSample(load_tensor(root / r["file"]), r["label"],
                                      from_dict(MotionSpec, r["spec"], "$.spec"), r["seed"])
        out.append(VsmTriplet(parts["ref1"], parts["ref2"], parts["query"], e["answer"]))
    return out, tuple(doc["classes"])
