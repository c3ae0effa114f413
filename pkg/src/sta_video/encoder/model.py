"""Forward pass of the stacked-temporal-attention video encoder.

Tokens flow as ``(..., T, N, D)`` arrays; any leading axes are batch axes.
Each block runs per-frame spatial attention over the N patches, per-patch
temporal attention over the T frames, then a GELU MLP, all pre-norm with
residual connections.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from ..errors import DimensionError
from ..numerics import (
    Parameter,
    SeededRng,
    Tensor,
    gelu,
    layer_norm,
    matmul,
    no_grad,
    rotate_pairs,
    softmax,
)
from ..rope import RotaryTable, rope_2d_tables
from .config import EncoderConfig


class EncoderWeights:
    """Flat mapping of parameter paths to :class:`Parameter` plus LoRA adapters.

    Adapters are keyed by the path of the 2-D weight they modify; every
    projection goes through :meth:`linear`, which adds the adapter's
    low-rank delta when one is attached.
    """

    def __init__(self, config: EncoderConfig, params: dict[str, Parameter], adapters=None):
        self.config = config
        self.params = params
        self.adapters = dict(adapters or {})

    def __getitem__(self, path: str) -> Parameter:
        return self.params[path]

    def __contains__(self, path: str) -> bool:
        return path in self.params

    def linear(self, x: Tensor, path: str) -> Tensor:
        out = matmul(x, self.params[path])
        adapter = self.adapters.get(path)
        if adapter is not None:
            out = out + adapter.delta(x)
        return out

    def named_parameters(self, include_adapters: bool = True) -> Iterator[tuple[str, Parameter]]:
        yield from self.params.items()
        if include_adapters:
            for target in sorted(self.adapters):
                yield from self.adapters[target].named_parameters()

    def all_parameters(self) -> dict[str, Parameter]:
        return dict(self.named_parameters())

    def block(self, index: int) -> "StaBlockParams":
        return StaBlockParams(self, index)

    def copy(self) -> "EncoderWeights":
        params = {k: Parameter(p.data.copy(), p.trainable) for k, p in self.params.items()}
        adapters = {k: a.copy() for k, a in self.adapters.items()}
        return EncoderWeights(self.config, params, adapters)


@dataclass(frozen=True)
class StaBlockParams:
    """View of one block's weights inside an :class:`EncoderWeights`."""

    weights: EncoderWeights
    index: int

    @property
    def prefix(self) -> str:
        return f"blocks.{self.index}."

    def __getitem__(self, name: str) -> Parameter:
        return self.weights[self.prefix + name]

    def linear(self, x: Tensor, name: str) -> Tensor:
        return self.weights.linear(x, self.prefix + name)

    def has(self, name: str) -> bool:
        return (self.prefix + name) in self.weights


# ---------------------------------------------------------------- parameters

def parameter_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    D, dt, hid = config.dim, config.temporal_dim, config.hidden_dim
    shapes: dict[str, tuple[int, ...]] = {
        "embed.weight": (config.patch_pixels, D),
        "embed.bias": (D,),
    }
    for m in range(config.blocks):
        p = f"blocks.{m}."
        shapes.update({
            p + "spatial_ln.gain": (D,), p + "spatial_ln.bias": (D,),
            p + "spatial.wq": (D, D), p + "spatial.wk": (D, D),
            p + "spatial.wv": (D, D), p + "spatial.wo": (D, D),
        })
        if m in config.placement:
            shapes.update({
                p + "temporal_ln.gain": (D,), p + "temporal_ln.bias": (D,),
                p + "temporal.wq": (D, dt), p + "temporal.wk": (D, dt),
                p + "temporal.wv": (D, dt), p + "temporal.wo": (dt, D),
            })
        shapes.update({
            p + "mlp_ln.gain": (D,), p + "mlp_ln.bias": (D,),
            p + "mlp.fc1": (D, hid), p + "mlp.fc1_bias": (hid,),
            p + "mlp.fc2": (hid, D), p + "mlp.fc2_bias": (D,),
        })
    shapes.update({
        "projector.weight": (D, config.proj_dim),
        "projector.bias": (config.proj_dim,),
        "head.weight": (config.proj_dim, config.num_classes),
        "head.bias": (config.num_classes,),
    })
    return shapes


def xavier_uniform(rng: SeededRng, shape: tuple[int, int]) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def init_weights(config: EncoderConfig, seed: int = 0, zero_temporal_out: bool = True) -> EncoderWeights:
    """Xavier-uniform projections, unit LN gains, zero biases.

    Each tensor draws from its own stream keyed by its path, so adding or
    removing a block never shifts the values of the others.
    """
    root = SeededRng(seed)
    params: dict[str, Parameter] = {}
    for path, shape in parameter_shapes(config).items():
        if path.endswith(".gain"):
            value = np.ones(shape)
        elif len(shape) == 1 or (zero_temporal_out and path.endswith("temporal.wo")):
            value = np.zeros(shape)
        else:
            value = xavier_uniform(root.child(path), shape)
        params[path] = Parameter(value)
    return EncoderWeights(config, params)


# ---------------------------------------------------------------- rope tables

@dataclass(frozen=True)
class RopeContext:
    spatial_cos: np.ndarray  # (N, head_dim)
    spatial_sin: np.ndarray
    temporal_cos: np.ndarray  # (T, head_dim)
    temporal_sin: np.ndarray


def build_rope(config: EncoderConfig) -> RopeContext:
    gh, gw = config.grid
    rows, cols = np.divmod(np.arange(config.num_patches), gw)
    half = RotaryTable(config.head_dim // 2, max(gh, gw), config.rope_base)
    sc, ss = rope_2d_tables(rows, cols, half)
    frames = RotaryTable(config.head_dim, config.frames, config.rope_base)
    tc, ts = frames.lookup(np.arange(config.frames))
    return RopeContext(sc, ss, tc, ts)


_ROPE_CACHE: dict[EncoderConfig, RopeContext] = {}


def rope_for(config: EncoderConfig) -> RopeContext:
    ctx = _ROPE_CACHE.get(config)
    if ctx is None:
        ctx = _ROPE_CACHE[config] = build_rope(config)
    return ctx


# ---------------------------------------------------------------- patchify

def extract_patches(clip: np.ndarray, config: EncoderConfig) -> np.ndarray:
    """``(..., T, H, W, C)`` pixels -> ``(..., T, N, P*P*C)``; patch (r, c) -> r*(W/P)+c."""
    clip = np.asarray(clip, dtype=np.float64)
    want = (config.frames, config.height, config.width, config.channels)
    if clip.ndim < 4 or clip.shape[-4:] != want:
        raise DimensionError(f"clip shape {clip.shape} does not end with (T,H,W,C)={want}")
    lead = clip.shape[:-4]
    P = config.patch
    gh, gw = config.grid
    x = clip.reshape(lead + (config.frames, gh, P, gw, P, config.channels))
    k = len(lead)
    x = x.transpose(tuple(range(k)) + (k, k + 1, k + 3, k + 2, k + 4, k + 5))
    return np.ascontiguousarray(x).reshape(lead + (config.frames, gh * gw, P * P * config.channels))


def patchify(clip, config: EncoderConfig, embed: Parameter, bias: Parameter | None = None) -> Tensor:
    """Linear embedding of non-overlapping P x P patches, ``(..., T, N, D)``."""
    if embed.shape != (config.patch_pixels, config.dim):
        raise DimensionError(
            f"embed weight {embed.shape} should be {(config.patch_pixels, config.dim)}")
    out = matmul(Tensor._wrap(extract_patches(clip, config)), embed)
    if bias is not None:
        out = out + bias
    return out


# ---------------------------------------------------------------- attention

def multi_head_attention(h: Tensor, block: StaBlockParams, kind: str, heads: int, head_dim: int,
                         cos: np.ndarray, sin: np.ndarray, record: dict | None = None) -> Tensor:
    """Self-attention over the second-to-last axis of ``h`` (already normalized).

    Queries and keys are rotated by the supplied RoPE tables; values are not.
    """
    lead, L = h.shape[:-2], h.shape[-2]

    def heads_first(t: Tensor) -> Tensor:
        return t.reshape(lead + (L, heads, head_dim)).swapaxes(-2, -3)

    q = rotate_pairs(heads_first(block.linear(h, f"{kind}.wq")), cos, sin)
    k = rotate_pairs(heads_first(block.linear(h, f"{kind}.wk")), cos, sin)
    v = heads_first(block.linear(h, f"{kind}.wv"))
    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(head_dim))
    attn = softmax(scores, axis=-1)
    if record is not None:
        record[f"blocks.{block.index}.{kind}"] = attn.data
    o = matmul(attn, v).swapaxes(-2, -3).reshape(lead + (L, heads * head_dim))
    return block.linear(o, f"{kind}.wo")


def spatial_attention(x: Tensor, block: StaBlockParams, rope: RopeContext,
                      record: dict | None = None) -> Tensor:
    """Per-frame attention over patches; frames never see each other."""
    cfg = block.weights.config
    h = layer_norm(x, block["spatial_ln.gain"], block["spatial_ln.bias"], cfg.ln_eps)
    out = multi_head_attention(h, block, "spatial", cfg.spatial_heads, cfg.head_dim,
                               rope.spatial_cos, rope.spatial_sin, record)
    return out + x


def temporal_attention(s: Tensor, block: StaBlockParams, rope: RopeContext,
                       record: dict | None = None) -> Tensor:
    """Per-patch attention over frames; patch indices never mix."""
    cfg = block.weights.config
    y = s.swapaxes(-2, -3)  # (..., N, T, D)
    h = layer_norm(y, block["temporal_ln.gain"], block["temporal_ln.bias"], cfg.ln_eps)
    out = multi_head_attention(h, block, "temporal", cfg.temporal_heads, cfg.head_dim,
                               rope.temporal_cos, rope.temporal_sin, record)
    return out.swapaxes(-2, -3) + s


def mlp(z: Tensor, block: StaBlockParams) -> Tensor:
    cfg = block.weights.config
    h = layer_norm(z, block["mlp_ln.gain"], block["mlp_ln.bias"], cfg.ln_eps)
    h = gelu(block.linear(h, "mlp.fc1") + block["mlp.fc1_bias"])
    return block.linear(h, "mlp.fc2") + block["mlp.fc2_bias"] + z


def block_forward(x: Tensor, block: StaBlockParams, config: EncoderConfig | None = None,
                  rope: RopeContext | None = None, record: dict | None = None) -> Tensor:
    config = config or block.weights.config
    rope = rope or rope_for(config)
    temporal = config.has_temporal(block.index)
    if config.temporal_order == "temporal_first":
        if temporal:
            x = temporal_attention(x, block, rope, record)
        x = spatial_attention(x, block, rope, record)
    else:
        x = spatial_attention(x, block, rope, record)
        if temporal:
            x = temporal_attention(x, block, rope, record)
    return mlp(x, block)


def encode(clip, weights: EncoderWeights, config: EncoderConfig | None = None,
           record: dict | None = None) -> Tensor:
    """Patchify then run every block; returns the final ``(..., T, N, D)`` tokens.

    ``config`` overrides ``weights.config`` (e.g. to switch temporal attention
    off for the same weights).
    """
    config = config or weights.config
    x = patchify(clip, config, weights["embed.weight"], weights["embed.bias"])
    rope = rope_for(config)
    for m in range(config.blocks):
        x = block_forward(x, weights.block(m), config, rope, record)
    return x


# ---------------------------------------------------------------- readouts

def project(x: Tensor, weights: EncoderWeights) -> Tensor:
    if x.shape[-1] != weights["projector.weight"].shape[0]:
        raise DimensionError(
            f"projector expects D={weights['projector.weight'].shape[0]}, got tokens {x.shape}")
    return weights.linear(x, "projector.weight") + weights["projector.bias"]


def pooled_features(x: Tensor, weights: EncoderWeights) -> Tensor:
    return project(x, weights).mean(axis=(-3, -2))


def pooled_class_logits(x: Tensor, weights: EncoderWeights) -> Tensor:
    """Mean-pool projected tokens over T x N, then the linear class head."""
    return weights.linear(pooled_features(x, weights), "head.weight") + weights["head.bias"]


def clip_embedding(x: Tensor, weights: EncoderWeights) -> np.ndarray:
    """L2-normalized pooled projector output."""
    v = np.asarray(pooled_features(x, weights).data)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(norm, 1e-300)


def classify_logits(clips, weights: EncoderWeights, config: EncoderConfig | None = None) -> Tensor:
    return pooled_class_logits(encode(clips, weights, config), weights)


def predict(clips: np.ndarray, weights: EncoderWeights, batch_size: int = 64) -> np.ndarray:
    """Batched argmax-of-logits under ``no_grad``."""
    out = []
    with no_grad():
        for i in range(0, len(clips), batch_size):
            out.append(classify_logits(clips[i:i + batch_size], weights).data.argmax(axis=-1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def embed_clips(clips: np.ndarray, weights: EncoderWeights, batch_size: int = 64) -> np.ndarray:
    out = []
    with no_grad():
        for i in range(0, len(clips), batch_size):
            out.append(clip_embedding(encode(clips[i:i + batch_size], weights), weights))
    return np.concatenate(out) if out else np.zeros((0, weights.config.proj_dim))


# ---------------------------------------------------------------- accounting

_COMPONENTS = ("embed", "spatial_attention", "temporal_attention", "mlp", "layer_norm",
               "projector", "head")


def _component(path: str) -> str:
    if path.startswith("embed."):
        return "embed"
    if path.startswith("projector."):
        return "projector"
    if path.startswith("head."):
        return "head"
    part = path.split(".")[2]
    if part.endswith("_ln"):
        return "layer_norm"
    return {"spatial": "spatial_attention", "temporal": "temporal_attention", "mlp": "mlp"}[part]


def count_parameters(weights: EncoderWeights | Mapping[str, Parameter],
                     config: EncoderConfig | None = None) -> dict:
    """Exact per-component parameter counts, plus the temporal/spatial attention ratio."""
    params = weights.params if isinstance(weights, EncoderWeights) else weights
    counts = dict.fromkeys(_COMPONENTS, 0)
    for path, p in params.items():
        counts[_component(path)] += int(p.size)
    lora = 0
    if isinstance(weights, EncoderWeights):
        lora = sum(int(p.size) for a in weights.adapters.values() for _, p in a.named_parameters())
    counts["lora"] = lora
    counts["total"] = sum(counts[c] for c in _COMPONENTS) + lora
    spatial = counts["spatial_attention"]
    counts["temporal_to_spatial_ratio"] = counts["temporal_attention"] / spatial if spatial else 0.0
    return counts
