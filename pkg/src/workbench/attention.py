"""Multi-head attention over [batch, time, d_model] tensors."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .numerics import add, matmul, mul, reshape, softmax, transpose


def declare_attention(store, prefix, config, query=True, key=True):
    d, hd = config.d_model, config.n_heads * config.d_kv
    if query:
        store.add(f"{prefix}.q", (d, hd))
    if key:
        store.add(f"{prefix}.k", (d, hd))
    store.add(f"{prefix}.v", (d, hd))
    store.add(f"{prefix}.o", (hd, d))


def split_heads(x, n_heads):
    B, T, hd = x.shape
    return transpose(reshape(x, (B, T, n_heads, hd // n_heads)), (0, 2, 1, 3))


def merge_heads(x):
    B, H, T, d = x.shape
    return reshape(transpose(x, (0, 2, 1, 3)), (B, T, H * d))


def attention_mask(key_mask, q_pos, k_pos, causal):
    """Boolean [B, 1, T_q, T_k] (or broadcastable) mask, True = may attend.

    Causality compares positions: key j is visible to query i iff
    k_pos[j] <= q_pos[i].
    """
    mask = None
    if causal:
        mask = (np.asarray(k_pos)[None, :] <= np.asarray(q_pos)[:, None])[None, None]
    if key_mask is not None:
        km = np.asarray(key_mask, dtype=bool)[:, None, None, :]
        mask = km if mask is None else (mask & km)
    return mask


def rel_key_logits(q, rk):
    """q [B, H, T_q, d] against offsets rk [T_q, T_k, d] -> [B, H, T_q, T_k]."""
    B, H, Tq, d = q.shape
    Tk = rk.shape[1]
    qt = reshape(transpose(q, (2, 0, 1, 3)), (Tq, B * H, d))
    r = matmul(qt, transpose(rk, (0, 2, 1)))
    return transpose(reshape(r, (Tq, B, H, Tk)), (1, 2, 0, 3))


def rel_value_mix(w, rv):
    """weights [B, H, T_q, T_k] applied to offsets rv [T_q, T_k, d]."""
    B, H, Tq, Tk = w.shape
    d = rv.shape[-1]
    wt = reshape(transpose(w, (2, 0, 1, 3)), (Tq, B * H, Tk))
    r = matmul(wt, rv)
    return transpose(reshape(r, (Tq, B, H, d)), (1, 2, 0, 3))


def dot_product_logits(q, k):
    scale = 1.0 / np.sqrt(q.shape[-1])
    return mul(matmul(q, transpose(k, (0, 1, 3, 2))), scale)


def attend(logits, v, mask=None, bias=None, value_offsets=None):
    """softmax(logits + bias) @ v per head; returns ([B, H, T_q, d], weights)."""
    if bias is not None:
        if bias.shape[-2:] != logits.shape[-2:] or bias.shape[0] not in (1, logits.shape[1]):
            raise ConfigError(f"bias shape {bias.shape} does not fit logits {logits.shape}")
        logits = add(logits, bias)
    if mask is not None:
        try:
            np.broadcast_shapes(np.shape(mask), logits.shape)
        except ValueError:
            raise ConfigError(f"mask shape {np.shape(mask)} does not fit logits {logits.shape}") from None
    w = softmax(logits, axis=-1, mask=mask)
    out = matmul(w, v)
    if value_offsets is not None:
        out = add(out, rel_value_mix(w, value_offsets))
    return out, w


def multihead_attention(params, prefix, config, queries_src, keys_src, mask=None,
                        bias=None, offsets=None, return_weights=False):
    """Scaled dot-product attention with H heads followed by the O projection.

    ``offsets`` is an optional (key offsets, value offsets) pair of relative
    position representations.
    """
    H = config.n_heads
    q = split_heads(matmul(queries_src, params[f"{prefix}.q"]), H)
    k = split_heads(matmul(keys_src, params[f"{prefix}.k"]), H)
    v = split_heads(matmul(keys_src, params[f"{prefix}.v"]), H)
    logits = dot_product_logits(q, k)
    rv = None
    if offsets is not None:
        rk, rv = offsets
        logits = add(logits, mul(rel_key_logits(q, rk), 1.0 / np.sqrt(config.d_kv)))
    out, w = attend(logits, v, mask, bias, rv)
    y = matmul(merge_heads(out), params[f"{prefix}.o"])
    return (y, w) if return_weights else y
