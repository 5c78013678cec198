"""Position information providers.

Each provider contributes through exactly one path:

* ``sinusoidal`` / ``learned``: an additive [T, d_model] table on the embeddings;
* ``relative-bias`` / ``relative-bias-shared``: a [H, T_q, T_k] bias on the
  self-attention logits, looked up from a [H, buckets] table by bucketed
  relative distance (one table per layer, or one per stack when shared);
* ``relative-representation``: per-layer offset embeddings indexed by the
  clipped relative distance, added to keys (and optionally values).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError
from .numerics import Init, Tensor, index

ADDITIVE = ("sinusoidal", "learned")
BIAS = ("relative-bias", "relative-bias-shared")


def sinusoidal_table(T, d_model):
    """Entry (t, i) is sin(t / 10000^(2*floor(i/2)/d)) for even i, cos for odd i."""
    if d_model % 2:
        raise ConfigError(f"sinusoidal table needs an even d_model, got {d_model}")
    t = np.arange(T, dtype=np.float64)[:, None]
    i = np.arange(d_model)
    rate = 10000.0 ** (2 * (i // 2) / d_model)
    angle = t / rate
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def relative_bucket(relative_distance, num_buckets=32, max_distance=128, bidirectional=True):
    """Bucket id for ``relative_distance = key_pos - query_pos``.

    Half the buckets (per direction when bidirectional) hold exact small
    distances; the rest cover distances up to ``max_distance`` on a log
    scale, with everything beyond sharing the last bucket.  With
    ``bidirectional=False`` keys after the query map to bucket 0.
    Works elementwise on integer arrays.
    """
    if num_buckets < 2:
        raise ConfigError("num_buckets must be >= 2")
    rel = np.asarray(relative_distance, dtype=np.int64)
    n = -rel
    ret = np.zeros_like(n)
    if bidirectional:
        num_buckets //= 2
        ret = ret + (n < 0).astype(np.int64) * num_buckets
        n = np.abs(n)
    else:
        n = np.maximum(n, 0)
    max_exact = max(num_buckets // 2, 1)
    is_small = n < max_exact
    if max_distance > max_exact and num_buckets > max_exact:
        with np.errstate(divide="ignore"):
            scaled = (np.log(np.maximum(n, 1) / max_exact)
                      / math.log(max_distance / max_exact) * (num_buckets - max_exact))
        large = max_exact + scaled.astype(np.int64)
    else:
        large = np.full_like(n, num_buckets - 1)
    large = np.minimum(large, num_buckets - 1)
    out = ret + np.where(is_small, n, large)
    return int(out) if np.ndim(out) == 0 else out


def bucket_matrix(q_pos, k_pos, num_buckets, max_distance, bidirectional):
    rel = np.asarray(k_pos)[None, :] - np.asarray(q_pos)[:, None]
    return relative_bucket(rel, num_buckets, max_distance, bidirectional)


def relative_representation_offsets(k, q_pos, k_pos=None):
    """Offset-table row for each (i, j): clip(j - i, -k, k) + k."""
    if k < 1:
        raise ConfigError("clip distance k must be >= 1")
    q_pos = np.arange(q_pos) if np.isscalar(q_pos) else np.asarray(q_pos)
    k_pos = q_pos if k_pos is None else (np.arange(k_pos) if np.isscalar(k_pos) else np.asarray(k_pos))
    rel = k_pos[None, :] - q_pos[:, None]
    return np.clip(rel, -k, k) + k


class PositionalProvider:
    """Declares and serves position parameters for one model config."""

    def __init__(self, config):
        self.config = config
        self.kind = config.variant.position_kind

    @property
    def path(self):
        if self.kind in ADDITIVE:
            return "additive"
        if self.kind in BIAS:
            return "bias"
        if self.kind == "relative-representation":
            return "offsets"
        return "none"

    def table_name(self, stack, layer):
        if self.kind == "relative-bias-shared":
            return f"{stack}.relbias"
        return f"{stack}.{layer}.self.relbias"

    def declare(self, store, stack, layers):
        """Declare parameters for ``stack`` ('enc'/'dec'); ``layers`` lists
        the layer indices whose self-attention consumes positions."""
        cfg, v = self.config, self.config.variant
        if self.kind == "learned":
            T = cfg.max_src_len if stack == "enc" else cfg.max_tgt_len
            store.add(f"{stack}.pos", (T, cfg.d_model), Init.normal(fan_in=cfg.d_model))
        elif self.kind == "relative-bias-shared":
            if layers:
                store.add(self.table_name(stack, 0), (cfg.n_heads, v.position_buckets), Init.zeros())
        elif self.kind == "relative-bias":
            for l in layers:
                store.add(self.table_name(stack, l), (cfg.n_heads, v.position_buckets), Init.zeros())
        elif self.kind == "relative-representation":
            rows = 2 * v.position_clip_k + 1
            for l in layers:
                store.add(f"{stack}.{l}.self.relpos.k", (rows, cfg.d_kv), Init.normal(fan_in=cfg.d_kv))
                if v.position_value_offsets:
                    store.add(f"{stack}.{l}.self.relpos.v", (rows, cfg.d_kv), Init.normal(fan_in=cfg.d_kv))

    def additive(self, store, stack, T):
        cfg = self.config
        limit = cfg.max_src_len if stack == "enc" else cfg.max_tgt_len
        if self.kind == "learned":
            if T > limit:
                raise ConfigError(f"sequence length {T} exceeds learned table size {limit}")
            return index(store[f"{stack}.pos"], slice(0, T))
        if self.kind == "sinusoidal":
            return Tensor(sinusoidal_table(T, cfg.d_model))
        return None

    def bias(self, store, stack, layer, q_pos, k_pos):
        """[H, T_q, T_k] logit bias, or None for providers without one."""
        if self.kind not in BIAS:
            return None
        v = self.config.variant
        buckets = bucket_matrix(q_pos, k_pos, v.position_buckets, v.position_max_distance,
                                bidirectional=(stack == "enc"))
        table = store[self.table_name(stack, layer)]
        return index(table, (slice(None), buckets))

    def offsets(self, store, stack, layer, q_pos, k_pos):
        """(key offsets [T_q, T_k, d_kv], value offsets or None), or None."""
        if self.kind != "relative-representation":
            return None
        idx = relative_representation_offsets(self.config.variant.position_clip_k, q_pos, k_pos)
        rk = index(store[f"{stack}.{layer}.self.relpos.k"], idx)
        name_v = f"{stack}.{layer}.self.relpos.v"
        rv = index(store[name_v], idx) if name_v in store else None
        return rk, rv


def relative_bias(provider, store, n_heads, T_q, T_k, layer, stack="enc"):
    """Bias tensor [H, T_q, T_k] for ``layer``; shared providers reuse one table."""
    if provider.kind not in BIAS:
        raise ConfigError(f"provider kind {provider.kind!r} has no attention bias")
    out = provider.bias(store, stack, layer, np.arange(T_q), np.arange(T_k))
    if out.shape[0] != n_heads:
        raise ConfigError("bias table head count does not match n_heads")
    return out
