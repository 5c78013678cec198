"""Lightweight and dynamic depthwise convolutions replacing self-attention.

Channels are split into ``groups`` contiguous bands that share one kernel
of ``width`` taps; kernels are softmax-normalised along the width.  The
lightweight kernel is a learned table, the dynamic kernel is predicted
from the input at the current time step.  Decoder convolutions are
causal, encoder ones are centred.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..numerics import Init, Tensor, concat, index, matmul, mul, reshape, softmax, sum


def declare_conv(store, prefix, config, kind):
    d, v = config.d_model, config.variant
    store.add(f"{prefix}.w_in", (d, d))
    if kind == "lightweight":
        store.add(f"{prefix}.kernel", (v.conv_groups, v.conv_width), Init.normal(fan_in=v.conv_width))
    else:
        store.add(f"{prefix}.dyn", (d, v.conv_groups * v.conv_width))
    store.add(f"{prefix}.w_out", (d, d))


def conv_inputs(prefix, kind):
    return [f"{prefix}.w_in"] + ([f"{prefix}.dyn"] if kind == "dynamic" else [])


def _windows(x, width, causal):
    """[B, T, d, width] stack of shifted copies; tap o of output t reads
    x[t + o - left] (zero outside the sequence)."""
    B, T, d = x.shape
    left = width - 1 if causal else (width - 1) // 2
    right = width - 1 - left
    parts = []
    if left:
        parts.append(Tensor(np.zeros((B, left, d))))
    parts.append(x)
    if right:
        parts.append(Tensor(np.zeros((B, right, d))))
    xp = concat(parts, axis=1) if len(parts) > 1 else x
    taps = [reshape(index(xp, (slice(None), slice(o, o + T))), (B, T, d, 1)) for o in range(width)]
    return concat(taps, axis=-1) if width > 1 else taps[0]


def channel_groups(d_model, groups):
    if groups < 1 or d_model % groups:
        raise ConfigError(f"d_model={d_model} is not divisible into {groups} weight groups")
    return np.arange(d_model) // (d_model // groups)


def light_dynamic_conv(kind, x, width, groups, kernel=None, dynamic_weight=None,
                       causal=False, kernel_source=None):
    """Depthwise convolution of x [B, T, d].

    lightweight: ``kernel`` [groups, width] logits shared over time.
    dynamic: logits at step t are ``kernel_source[t] @ dynamic_weight``
    (kernel_source defaults to x) reshaped to [groups, width].
    """
    B, T, d = x.shape
    if width < 1:
        raise ConfigError("convolution width must be >= 1")
    band = channel_groups(d, groups)
    stacked = _windows(x, width, causal)
    if kind == "lightweight":
        if kernel is None or kernel.shape != (groups, width):
            raise ConfigError(f"lightweight kernel must have shape {(groups, width)}")
        w = index(softmax(kernel, axis=-1), band)                  # [d, width]
    elif kind == "dynamic":
        src = x if kernel_source is None else kernel_source
        logits = reshape(matmul(src, dynamic_weight), (B, T, groups, width))
        w = index(softmax(logits, axis=-1), (slice(None), slice(None), band))  # [B, T, d, width]
    else:
        raise ConfigError(f"unknown convolution kind {kind!r}")
    return sum(mul(stacked, w), axis=-1)


def conv_block(params, prefix, config, x, kind, causal):
    """(conv(x W_in)) W_out with the sub-block's kernel parameters."""
    v = config.variant
    inner = matmul(x, params[f"{prefix}.w_in"])
    if kind == "lightweight":
        y = light_dynamic_conv(kind, inner, v.conv_width, v.conv_groups,
                               kernel=params[f"{prefix}.kernel"], causal=causal)
    else:
        y = light_dynamic_conv(kind, inner, v.conv_width, v.conv_groups,
                               dynamic_weight=params[f"{prefix}.dyn"], causal=causal,
                               kernel_source=x)
    return matmul(y, params[f"{prefix}.w_out"])
