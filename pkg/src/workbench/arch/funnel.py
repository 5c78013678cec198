"""Funnel encoder: stride-2 mean pooling between blocks of layers."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..numerics import Tensor, concat, mul, reshape, sum


def funnel_length(T, blocks):
    """Encoder output length after ``blocks - 1`` stride-2 pools (with padding)."""
    factor = 2 ** (blocks - 1)
    return -(-T // factor)


def pool_sequence(h, key_mask=None, positions=None, stride=2):
    """Mean-pool ``h`` [B, T, d] over non-overlapping windows of ``stride``.

    Odd lengths are padded with masked slots; a window's mean covers only
    its valid entries.  Returns (pooled, pooled mask, pooled positions); a
    pooled slot sits at the position of its window's first element.
    """
    B, T, d = h.shape
    mask = np.ones((B, T), dtype=bool) if key_mask is None else np.asarray(key_mask, dtype=bool)
    pos = np.arange(T) if positions is None else np.asarray(positions)
    pad = (-T) % stride
    if pad:
        h = concat([h, Tensor(np.zeros((B, pad, d)))], axis=1)
        mask = np.concatenate([mask, np.zeros((B, pad), dtype=bool)], axis=1)
        pos = np.concatenate([pos, pos[-1] + 1 + np.arange(pad)])
    n = h.shape[1] // stride
    windows = mask.reshape(B, n, stride)
    count = np.maximum(windows.sum(axis=-1, keepdims=True), 1)
    weight = (windows / count).reshape(B, n, stride, 1)
    pooled = sum(mul(reshape(h, (B, n, stride, d)), weight), axis=2)
    return pooled, windows.any(axis=-1), pos[::stride]


def funnel_encode(h, layer_fn, blocks=3, layers_per_block=4, key_mask=None, positions=None):
    """Run ``blocks * layers_per_block`` encoder layers, pooling at each
    block boundary.

    ``layer_fn(l, h, mask, pos, kv)`` applies encoder layer ``l``; at a
    transition layer ``kv`` is the unpooled (h, mask, pos) triple, which
    supplies keys and values while the pooled sequence supplies queries
    and the residual stream.  Returns (h, mask, pos).
    """
    B, T, _ = h.shape
    if T < 2 ** (blocks - 1):
        raise ConfigError(f"funnel with {blocks} blocks needs at least {2 ** (blocks - 1)} positions")
    mask = np.ones((B, T), dtype=bool) if key_mask is None else np.asarray(key_mask, dtype=bool)
    pos = np.arange(T) if positions is None else np.asarray(positions)
    l = 0
    for b in range(blocks):
        for i in range(layers_per_block):
            if b > 0 and i == 0:
                pooled, pmask, ppos = pool_sequence(h, mask, pos)
                h = layer_fn(l, pooled, pmask, ppos, (h, mask, pos))
                mask, pos = pmask, ppos
            else:
                h = layer_fn(l, h, mask, pos, None)
            l += 1
    return h, mask, pos
