"""Slow loop-based encoder used as an oracle in tests.

Shares nothing with the package besides the parameter dictionary layout.
"""
from __future__ import annotations

import math

import numpy as np


def layer_norm(x, gain, bias, eps):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def rotate(vec, positions, base):
    """Rotate pairs of ``vec`` by one position per chunk, chunks split evenly."""
    out = vec.copy()
    chunk = len(vec) // len(positions)
    for c, pos in enumerate(positions):
        for j in range(chunk // 2):
            a = pos / base ** (2 * j / chunk)
            i = c * chunk + 2 * j
            x0, x1 = vec[i], vec[i + 1]
            out[i] = math.cos(a) * x0 - math.sin(a) * x1
            out[i + 1] = math.sin(a) * x0 + math.cos(a) * x1
    return out


def attention(h, wq, wk, wv, wo, heads, hd, positions, base):
    """``h``: (L, D); ``positions[l]`` is a tuple of rotary positions for token l."""
    L = h.shape[0]
    q, k, v = h @ wq, h @ wk, h @ wv
    out = np.zeros((L, heads * hd))
    for head in range(heads):
        sl = slice(head * hd, (head + 1) * hd)
        qr = np.stack([rotate(q[i, sl], positions[i], base) for i in range(L)])
        kr = np.stack([rotate(k[i, sl], positions[i], base) for i in range(L)])
        a = softmax(qr @ kr.T / math.sqrt(hd))
        out[:, sl] = a @ v[:, sl]
    return out @ wo


def gelu(x):
    return 0.5 * x * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))


def encode(clip, params, cfg, temporal=True):
    P, gw = cfg.patch, cfg.width // cfg.patch
    T, N, D = cfg.frames, cfg.num_patches, cfg.dim
    x = np.zeros((T, N, D))
    for t in range(T):
        for n in range(N):
            r, c = divmod(n, gw)
            pix = clip[t, r * P:(r + 1) * P, c * P:(c + 1) * P, :].reshape(-1)
            x[t, n] = pix @ params["embed.weight"] + params["embed.bias"]
    grid_pos = [divmod(n, gw) for n in range(N)]
    for m in range(cfg.blocks):
        p = lambda name: params[f"blocks.{m}.{name}"]

        def spatial(x):
            out = x.copy()
            for t in range(T):
                h = layer_norm(x[t], p("spatial_ln.gain"), p("spatial_ln.bias"), cfg.ln_eps)
                out[t] += attention(h, p("spatial.wq"), p("spatial.wk"), p("spatial.wv"),
                                    p("spatial.wo"), cfg.spatial_heads, cfg.head_dim, grid_pos,
                                    cfg.rope_base)
            return out

        def temporal_(x):
            out = x.copy()
            for n in range(N):
                h = layer_norm(x[:, n], p("temporal_ln.gain"), p("temporal_ln.bias"), cfg.ln_eps)
                out[:, n] += attention(h, p("temporal.wq"), p("temporal.wk"), p("temporal.wv"),
                                       p("temporal.wo"), cfg.temporal_heads, cfg.head_dim,
                                       [(t,) for t in range(T)], cfg.rope_base)
            return out

        use_t = temporal and m in cfg.placement
        if cfg.temporal_order == "temporal_first":
            x = spatial(temporal_(x) if use_t else x)
        else:
            x = spatial(x)
            x = temporal_(x) if use_t else x
        h = layer_norm(x, p("mlp_ln.gain"), p("mlp_ln.bias"), cfg.ln_eps)
        x = gelu(h @ p("mlp.fc1") + p("mlp.fc1_bias")) @ p("mlp.fc2") + p("mlp.fc2_bias") + x
    return x


def pooled_logits(tokens, params):
    T, N = tokens.shape[:2]
    total = np.zeros(params["projector.weight"].shape[1])
    for t in range(T):
        for n in range(N):
            total += tokens[t, n] @ params["projector.weight"] + params["projector.bias"]
    pooled = total / (T * N)
    return pooled @ params["head.weight"] + params["head.bias"], pooled
