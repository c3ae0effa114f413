"""Attention heatmaps as binary PGM images and CSV tables."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, FileError
from ..numerics import no_grad
from .model import EncoderWeights, encode


@dataclass
class AttentionMaps:
    """Attention received, averaged over heads and queries.

    ``spatial[t, n]`` is the mass patch ``n`` receives within frame ``t``;
    ``temporal[n, t]`` is the mass frame ``t`` receives at patch ``n``.
    Both are row-stochastic. ``temporal`` is ``None`` without a temporal block.
    """

    spatial: np.ndarray
    temporal: np.ndarray | None


def attention_maps(clip: np.ndarray, weights: EncoderWeights, block_index: int) -> AttentionMaps:
    cfg = weights.config
    if not 0 <= block_index < cfg.blocks:
        raise ConfigError(f"block_index {block_index} outside [0, {cfg.blocks})")
    clip = np.asarray(clip, dtype=np.float64)
    if clip.ndim != 4:
        raise ConfigError(f"expected one (T, H, W, C) clip, got shape {clip.shape}")
    record: dict = {}
    with no_grad():
        encode(clip, weights, record=record)
    # (T, heads, N, N) -> mean over heads then over queries
    spatial = record[f"blocks.{block_index}.spatial"].mean(axis=-3).mean(axis=-2)
    temporal = record.get(f"blocks.{block_index}.temporal")
    if temporal is not None:
        temporal = temporal.mean(axis=-3).mean(axis=-2)
    return AttentionMaps(spatial, temporal)


def pgm_bytes(image: np.ndarray) -> bytes:
    """8-bit P5 image scaled so the largest value maps to 255."""
    image = np.asarray(image, dtype=np.float64)
    peak = image.max() if image.size else 0.0
    scaled = np.zeros_like(image) if peak <= 0 else image / peak
    pixels = np.clip(np.round(scaled * 255.0), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def read_pgm(blob: bytes) -> np.ndarray:
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def _csv(rows: np.ndarray) -> str:
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in rows)


def export_attention_maps(clip: np.ndarray, weights: EncoderWeights, block_index: int,
                          out_dir: str | os.PathLike) -> dict[str, Path]:
    """Write spatial and temporal maps for one block; returns the written paths.

    The spatial image tiles frames left to right, each frame drawn on its
    patch grid with every cell enlarged to patch size.
    """
    cfg = weights.config
    maps = attention_maps(clip, weights, block_index)
    rows, cols = cfg.grid
    root = Path(out_dir)
    stem = f"block{block_index}"
    tiles = [np.kron(frame.reshape(rows, cols), np.ones((cfg.patch, cfg.patch)))
             for frame in maps.spatial]
    files = {
        f"{stem}_spatial.csv": _csv(maps.spatial).encode(),
        f"{stem}_spatial.pgm": pgm_bytes(np.concatenate(tiles, axis=1)),
    }
    if maps.temporal is not None:
        files[f"{stem}_temporal.csv"] = _csv(maps.temporal).encode()
        files[f"{stem}_temporal.pgm"] = pgm_bytes(np.kron(maps.temporal, np.ones((4, 4))))
    written = {}
    for name, blob in files.items():
        path = root / name
        try:
            root.mkdir(parents=True, exist_ok=True)
            path.write_bytes(blob)
        except OSError as exc:
            raise FileError(f"could not write attention map {path}: {exc}") from exc
        written[name] = path
    return written
