"""Feedforward nonlinearities, GLU feedforwards and normalisation wiring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .numerics import Init, add, matmul, mean, mul, sub, unary

ACTIVATIONS = ("relu", "gelu", "swish", "elu", "selu", "sigmoid", "softplus")
GLU_GATES = {"glu": "sigmoid", "reglu": "relu", "geglu": "gelu", "swiglu": "swish", "liglu": "identity"}


def activation(kind, x):
    if kind not in ACTIVATIONS and kind != "identity":
        raise ConfigError(f"unknown activation {kind!r}")
    return unary(kind, x)


# -- feedforward blocks -------------------------------------------------------

def declare_ffn(store, prefix, config):
    d, v = config.d_model, config.variant
    if v.ffn_glu_kind != "none":
        f = config.d_ff_glu
        store.add(f"{prefix}.wg", (d, f))
        store.add(f"{prefix}.bg", (f,), Init.zeros())
        store.add(f"{prefix}.wl", (d, f))
        store.add(f"{prefix}.bl", (f,), Init.zeros())
        store.add(f"{prefix}.wo", (f, d))
        store.add(f"{prefix}.bo", (d,), Init.zeros())
    else:
        store.add(f"{prefix}.w1", (d, config.d_ff))
        store.add(f"{prefix}.b1", (config.d_ff,), Init.zeros())
        store.add(f"{prefix}.w2", (config.d_ff, d))
        store.add(f"{prefix}.b2", (d,), Init.zeros())


def ffn_matrices(prefix, config):
    """(input-side, output-side) matrix names of a dense or GLU feedforward."""
    if config.variant.ffn_glu_kind != "none":
        return [f"{prefix}.wg", f"{prefix}.wl"], [f"{prefix}.wo"]
    return [f"{prefix}.w1"], [f"{prefix}.w2"]


def dense_ffn(s, w1, b1, w2, b2, kind="relu"):
    """act(s W1 + b1) W2 + b2, position-wise."""
    return add(matmul(activation(kind, add(matmul(s, w1), b1)), w2), b2)


def glu_ffn(kind, s, params, prefix):
    """(gate(s Wg + bg) * (s Wl + bl)) Wo + bo."""
    try:
        gate = GLU_GATES[kind]
    except KeyError:
        raise ConfigError(f"unknown GLU kind {kind!r}") from None
    g = unary(gate, add(matmul(s, params[f"{prefix}.wg"]), params[f"{prefix}.bg"]))
    lin = add(matmul(s, params[f"{prefix}.wl"]), params[f"{prefix}.bl"])
    return add(matmul(mul(g, lin), params[f"{prefix}.wo"]), params[f"{prefix}.bo"])


def feed_forward(s, params, prefix, config):
    v = config.variant
    if v.ffn_glu_kind != "none":
        return glu_ffn(v.ffn_glu_kind, s, params, prefix)
    return dense_ffn(s, params[f"{prefix}.w1"], params[f"{prefix}.b1"],
                     params[f"{prefix}.w2"], params[f"{prefix}.b2"], v.ffn_activation)


# -- normalisation --------------------------------------------------------------

def layer_norm(h, gamma, beta, eps=1e-6):
    """gamma * (h - mean) / sqrt(var + eps) + beta over the last axis."""
    if h.shape[-1] < 2:
        raise ConfigError("layer norm needs at least two features")
    centered = sub(h, mean(h, axis=-1, keepdims=True))
    var = mean(unary("square", centered), axis=-1, keepdims=True)
    inv = unary("reciprocal", unary("sqrt", add(var, eps)))
    return add(mul(mul(centered, inv), gamma), beta)


def rms_norm(h, gamma, eps=1e-6):
    """gamma * h / sqrt(mean(h^2) + eps); no centring and no shift."""
    ms = mean(unary("square", h), axis=-1, keepdims=True)
    return mul(mul(h, unary("reciprocal", unary("sqrt", add(ms, eps)))), gamma)


def rezero_residual(x, subblock_out, alpha):
    return add(x, mul(alpha, subblock_out))


def base_norm(kind):
    """The normalisation applied to sub-block inputs and the final output."""
    if kind in ("layernorm", "rezero+layernorm"):
        return "layernorm"
    if kind in ("rmsnorm", "rezero+rmsnorm"):
        return "rmsnorm"
    return None


def declare_norm(store, prefix, config):
    d = config.d_model
    kind = base_norm(config.variant.norm_kind)
    if kind == "layernorm":
        store.add(f"{prefix}.ln.g", (d,), Init.ones())
        store.add(f"{prefix}.ln.b", (d,), Init.zeros())
    elif kind == "rmsnorm":
        store.add(f"{prefix}.ln.g", (d,), Init.ones())


def declare_subblock_norm(store, prefix, config):
    """Per-residual-sub-block parameters implied by ``norm.kind``."""
    kind = config.variant.norm_kind
    declare_norm(store, prefix, config)
    if kind.startswith("rezero"):
        store.add(f"{prefix}.alpha", (1,), Init.zeros())
    elif kind == "fixup":
        store.add(f"{prefix}.fixup.bias", (1,), Init.zeros())
        store.add(f"{prefix}.fixup.scale", (1,), Init.ones())


def normalize(params, prefix, config, h):
    kind = base_norm(config.variant.norm_kind)
    eps = config.variant.norm_eps
    if kind == "layernorm":
        return layer_norm(h, params[f"{prefix}.ln.g"], params[f"{prefix}.ln.b"], eps)
    if kind == "rmsnorm":
        return rms_norm(h, params[f"{prefix}.ln.g"], eps)
    return h


def branch_input(params, prefix, config, h):
    """What the sub-block's branch sees given residual stream ``h``."""
    kind = config.variant.norm_kind
    if kind == "fixup":
        return add(h, params[f"{prefix}.fixup.bias"])
    if config.variant.norm_placement == "post":
        return h
    return normalize(params, prefix, config, h)


def sublayer(params, prefix, config, x, branch, base=None):
    """Residual wiring of one sub-block.

    ``branch`` maps the (normalised) input to the sub-block output.  ``base``
    overrides the residual stream added back (used when the branch input
    and the residual differ in length, as at a funnel pooling step).
    """
    kind = config.variant.norm_kind
    base = x if base is None else base
    out = branch(branch_input(params, prefix, config, x))
    if kind.startswith("rezero"):
        return rezero_residual(base, out, params[f"{prefix}.alpha"])
    if kind == "fixup":
        return add(base, mul(params[f"{prefix}.fixup.scale"], out))
    if config.variant.norm_placement == "post":
        return normalize(params, prefix, config, add(base, out))
    return add(base, out)


# -- fixup ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Directive:
    """One initialisation instruction: ``scalar`` adds a [1] parameter with
    ``value``; ``zero`` zero-initialises a matrix; ``scale`` redraws a matrix
    with its fan-in std multiplied by ``value``."""

    action: str
    name: str
    value: float = 0.0


def fixup_init(config):
    """Directives for the no-normalisation Fixup recipe.

    Every residual sub-block gains a scalar input bias (0) and output scale
    (1); each branch's final projection starts at zero and its other
    matrices are scaled by N^(-1/2), N being the number of residual
    sub-blocks.
    """
    from .model import subblock_layout

    blocks = subblock_layout(config)
    factor = 1.0 / np.sqrt(len(blocks)) if blocks else 1.0
    out = []
    for b in blocks:
        out.append(Directive("scalar", f"{b.prefix}.fixup.bias", 0.0))
        out.append(Directive("scalar", f"{b.prefix}.fixup.scale", 1.0))
    seen = set()
    for b in blocks:
        for name in b.inputs:
            if name not in seen:
                seen.add(name)
                out.append(Directive("scale", name, factor))
        for name in b.outputs:
            if name not in seen:
                seen.add(name)
                out.append(Directive("zero", name))
    return out


def apply_directives(store, directives):
    for d in directives:
        if d.action == "scalar":
            if d.name not in store:
                store.add(d.name, (1,), Init.constant(d.value))
        elif d.action == "zero":
            store.reinit(d.name, Init.zeros())
        elif d.action == "scale":
            old = store.init_of(d.name)
            store.reinit(d.name, Init.normal(scale=old.scale * d.value, fan_in=old.fan_in))
        else:
            raise ConfigError(f"unknown directive {d.action!r}")
