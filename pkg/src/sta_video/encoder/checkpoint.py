"""Checkpoint directories: one tensor file per parameter plus ``manifest.json``."""
from __future__ import annotations

import json
import os
from pathlib import Path

from ..errors import CompatibilityError, DataError, FileError
from ..numerics import Parameter, load_tensor, save_tensor
from .config import EncoderConfig
from .model import EncoderWeights, parameter_shapes

MANIFEST = "manifest.json"
FORMAT_VERSION = 1


def _file_name(path: str) -> str:
    return path.replace("/", "_") + ".f64"


def save_checkpoint(weights: EncoderWeights, directory: str | os.PathLike,
                    extra: dict | None = None) -> Path:
    root = Path(directory)
    params, adapters = {}, {}
    try:
        (root / "params").mkdir(parents=True, exist_ok=True)
        for name, p in weights.params.items():
            fname = "params/" + _file_name(name)
            save_tensor(root / fname, p.data)
            params[name] = {"file": fname, "trainable": bool(p.trainable)}
        for target in sorted(weights.adapters):
            a = weights.adapters[target]
            entry = {"rank": a.rank, "alpha": a.alpha}
            for part, tensor in (("a", a.a), ("b", a.b)):
                fname = f"params/{_file_name(target)}.lora_{part}.f64"
                save_tensor(root / fname, tensor.data)
                entry[part] = fname
                entry[f"{part}_trainable"] = bool(tensor.trainable)
            adapters[target] = entry
        doc = {"format": FORMAT_VERSION, "config": weights.config.to_dict(),
               "params": params, "adapters": adapters}
        if extra:
            doc["extra"] = extra
        (root / MANIFEST).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise FileError(f"could not write checkpoint to {root}: {exc}") from exc
    return root


def read_manifest(directory: str | os.PathLike) -> dict:
    path = Path(directory) / MANIFEST
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"no checkpoint manifest at {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"unreadable checkpoint manifest {path}: {exc}") from exc


def load_checkpoint(directory: str | os.PathLike) -> EncoderWeights:
    from ..adaptation.lora import LoraAdapter

    root = Path(directory)
    doc = read_manifest(root)
    config = EncoderConfig.from_dict(doc["config"], "$.checkpoint.config")
    expected = parameter_shapes(config)
    if set(expected) != set(doc["params"]):
        missing = sorted(set(expected) - set(doc["params"]))
        extra = sorted(set(doc["params"]) - set(expected))
        raise CompatibilityError(f"checkpoint {root} parameters disagree with its config: "
                                 f"missing {missing}, unexpected {extra}")
    params = {}
    for name in expected:
        entry = doc["params"][name]
        data = load_tensor(root / entry["file"])
        if data.shape != expected[name]:
            raise CompatibilityError(f"{name}: stored shape {data.shape}, config expects {expected[name]}")
        params[name] = Parameter(data, entry["trainable"])
    adapters = {}
    for target, entry in doc.get("adapters", {}).items():
        a = Parameter(load_tensor(root / entry["a"]), entry.get("a_trainable", True))
        b = Parameter(load_tensor(root / entry["b"]), entry.get("b_trainable", True))
        adapters[target] = LoraAdapter(target, a, b, entry["alpha"])
    return EncoderWeights(config, params, adapters)


def check_compatible(config: EncoderConfig, frames: int, height: int, width: int, channels: int,
                     num_classes: int | None = None, where: str = "dataset") -> None:
    """Raise :class:`CompatibilityError` naming both sides when shapes disagree."""
    theirs = {"frames": frames, "height": height, "width": width, "channels": channels}
    if num_classes is not None:
        theirs["num_classes"] = num_classes
    ours = {k: getattr(config, k) for k in theirs}
    if ours != theirs:
        raise CompatibilityError(f"checkpoint config {ours} does not match {where} {theirs}")
