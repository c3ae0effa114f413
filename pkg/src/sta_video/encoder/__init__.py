"""Patch embedding, stacked spatial/temporal attention blocks, readouts."""
from .attention_maps import AttentionMaps, attention_maps, export_attention_maps
from .checkpoint import check_compatible, load_checkpoint, read_manifest, save_checkpoint
from .config import HEAD_SCALES, PLACEMENTS, TEMPORAL_ORDERS, EncoderConfig, placement_indices
from .model import (
    EncoderWeights,
    RopeContext,
    StaBlockParams,
    block_forward,
    build_rope,
    classify_logits,
    clip_embedding,
    count_parameters,
    embed_clips,
    encode,
    extract_patches,
    init_weights,
    mlp,
    multi_head_attention,
    parameter_shapes,
    patchify,
    pooled_class_logits,
    pooled_features,
    predict,
    project,
    rope_for,
    spatial_attention,
    temporal_attention,
)

__all__ = [
    "AttentionMaps", "attention_maps", "export_attention_maps",
    "check_compatible", "load_checkpoint", "read_manifest", "save_checkpoint",
    "HEAD_SCALES", "PLACEMENTS", "TEMPORAL_ORDERS", "EncoderConfig", "placement_indices",
    "EncoderWeights", "RopeContext", "StaBlockParams", "block_forward", "build_rope",
    "classify_logits", "clip_embedding", "count_parameters", "embed_clips", "encode",
    "extract_patches", "init_weights", "mlp", "multi_head_attention", "parameter_shapes",
    "patchify", "pooled_class_logits", "pooled_features", "predict", "project", "rope_for",
    "spatial_attention", "temporal_attention",
]
