"""Synthetic attention: logits produced without query-key dot products.

``dense`` predicts each position's row of logits from that position alone
with a two-layer MLP; ``random`` learns a fixed [H, T, T] table;
``factorized`` learns the table as a per-head low-rank product R1 R2^T.
Mixing with ordinary dot-product logits is optional (``plus``) or convex
with a learned scalar (``plus-alpha``).
"""

from __future__ import annotations

import numpy as np

from ..attention import attend, dot_product_logits, merge_heads, split_heads
from ..errors import ConfigError
from ..numerics import Init, add, index, matmul, mul, reshape, sub, transpose, unary


def declare_synthesizer(store, prefix, config, t_max):
    v = config.variant
    d, H, dk = config.d_model, config.n_heads, config.d_kv
    if v.synth_kind == "dense":
        store.add(f"{prefix}.synth.w1", (d, H * dk))
        store.add(f"{prefix}.synth.b1", (H * dk,), Init.zeros())
        store.add(f"{prefix}.synth.w2", (H, dk, t_max), Init.normal(fan_in=dk))
        store.add(f"{prefix}.synth.b2", (H, 1, t_max), Init.zeros())
    elif v.synth_kind == "random":
        store.add(f"{prefix}.synth.table", (H, t_max, t_max), Init.normal(fan_in=t_max))
    elif v.synth_kind == "factorized":
        k = v.synth_factor_k
        store.add(f"{prefix}.synth.r1", (H, t_max, k), Init.normal(fan_in=k))
        store.add(f"{prefix}.synth.r2", (H, t_max, k), Init.normal(fan_in=k))
    else:
        raise ConfigError(f"unknown synthesizer kind {v.synth_kind!r}")
    if v.synth_mix != "pure" or v.synth_kind != "dense":
        # table kinds keep the query projection of the reference layer
        store.add(f"{prefix}.q", (d, H * dk))
    if v.synth_mix != "pure":
        store.add(f"{prefix}.k", (d, H * dk))
    if v.synth_mix == "plus-alpha":
        store.add(f"{prefix}.synth.alpha", (1,), Init.constant(0.5))
    store.add(f"{prefix}.v", (d, H * dk))
    store.add(f"{prefix}.o", (H * dk, d))


def synthesizer_inputs(prefix, config):
    """Input-side matrices of the sub-block (for depth-scaled inits)."""
    v = config.variant
    names = {"dense": [f"{prefix}.synth.w1", f"{prefix}.synth.w2"],
             "random": [], "factorized": []}[v.synth_kind]
    if v.synth_mix != "pure" or v.synth_kind != "dense":
        names.append(f"{prefix}.q")
    if v.synth_mix != "pure":
        names.append(f"{prefix}.k")
    return names + [f"{prefix}.v"]


def synthetic_logits(kind, params, prefix, x, n_heads, t_max):
    """[B, H, T, T] (dense) or [H, T, T] (table kinds) logits for x [B, T, d]."""
    T = x.shape[1]
    if T > t_max:
        raise ConfigError(f"sequence length {T} exceeds the synthesizer's trained length {t_max}")
    if kind == "dense":
        hidden = unary("relu", add(matmul(x, params[f"{prefix}.synth.w1"]), params[f"{prefix}.synth.b1"]))
        hidden = split_heads(hidden, n_heads)
        full = add(matmul(hidden, params[f"{prefix}.synth.w2"]), params[f"{prefix}.synth.b2"])
        return index(full, (Ellipsis, slice(0, T)))
    if kind == "random":
        return index(params[f"{prefix}.synth.table"], (slice(None), slice(0, T), slice(0, T)))
    if kind == "factorized":
        r1 = index(params[f"{prefix}.synth.r1"], (slice(None), slice(0, T)))
        r2 = index(params[f"{prefix}.synth.r2"], (slice(None), slice(0, T)))
        return matmul(r1, transpose(r2, (0, 2, 1)))
    raise ConfigError(f"unknown synthesizer kind {kind!r}")


def synthesizer_attention(params, prefix, config, x, t_max, mask=None, bias=None,
                          return_weights=False):
    """Self-attention over x [B, T, d] with synthesized (or mixed) logits."""
    v = config.variant
    H = config.n_heads
    logits = synthetic_logits(v.synth_kind, params, prefix, x, H, t_max)
    if v.synth_mix != "pure":
        q = split_heads(matmul(x, params[f"{prefix}.q"]), H)
        k = split_heads(matmul(x, params[f"{prefix}.k"]), H)
        dot = dot_product_logits(q, k)
        if v.synth_mix == "plus":
            logits = add(logits, dot)
        else:
            alpha = params[f"{prefix}.synth.alpha"]
            logits = add(mul(alpha, logits), mul(sub(1.0, alpha), dot))
    if logits.ndim == 3:
        # table kinds: broadcast the shared pattern over the batch
        B = x.shape[0]
        logits = add(logits, np.zeros((B,) + logits.shape))
    val = split_heads(matmul(x, params[f"{prefix}.v"]), H)
    out, w = attend(logits, val, mask, bias)
    y = matmul(merge_heads(out), params[f"{prefix}.o"])
    return (y, w) if return_weights else y
