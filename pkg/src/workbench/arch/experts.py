"""Sparsely activated expert feedforwards (top-k mixture and top-1 switch).

Tokens are routed by a softmax router.  Each expert accepts at most
``capacity`` tokens; dispatch walks the routing ranks in order (every
token's first choice before any second choice) and, within a rank, the
tokens in sequence order, so the result is deterministic.  Tokens that
overflow an expert receive no output from it.
"""

from __future__ import annotations

import math

import numpy as np

from ..act_norm import dense_ffn
from ..errors import ConfigError
from ..numerics import Init, Tensor, add, div, index, matmul, mean, mul, reshape, scatter_add, softmax, sum


def declare_experts(store, prefix, config):
    d, v = config.d_model, config.variant
    E, F = v.experts_n, config.d_ff_expert
    store.add(f"{prefix}.router", (d, E))
    store.add(f"{prefix}.w1", (E, d, F))
    store.add(f"{prefix}.b1", (E, 1, F), Init.zeros())
    store.add(f"{prefix}.w2", (E, F, d))
    store.add(f"{prefix}.b2", (E, 1, d), Init.zeros())


def topk_indices(scores, k):
    """Indices of the k largest entries per row; ties go to the lower index."""
    scores = np.asarray(scores)
    return np.argsort(-scores, axis=-1, kind="stable")[..., :k]


def capacity_for(n_tokens, n_experts, k, capacity_factor):
    """ceil(capacity_factor * k * tokens / n_experts); None disables dropping."""
    if capacity_factor <= 0:
        return None
    return int(math.ceil(capacity_factor * k * n_tokens / n_experts))


def dispatch(choices, n_experts, capacity):
    """Boolean [N, k] mask of kept (token, rank) assignments."""
    N, k = choices.shape
    kept = np.zeros((N, k), dtype=bool)
    load = np.zeros(n_experts, dtype=np.int64)
    for r in range(k):
        for n in range(N):
            e = choices[n, r]
            if capacity is None or load[e] < capacity:
                kept[n, r] = True
                load[e] += 1
    return kept


def load_balance_loss(probs, top1, n_experts):
    """n_experts * sum_e (fraction of tokens whose first choice is e) * (mean router prob of e)."""
    frac = np.bincount(top1, minlength=n_experts) / top1.size
    return mul(sum(mul(mean(probs, axis=0), frac)), float(n_experts))


def expert_ffn(x, params, prefix, config, k, capacity_factor=None, return_routing=False):
    """Routed feedforward of x [..., d]; returns (y, aux loss[, routing])."""
    v = config.variant
    E = v.experts_n
    if not 1 <= k <= E:
        raise ConfigError(f"router k={k} must lie in [1, {E}]")
    cf = v.experts_capacity_factor if capacity_factor is None else capacity_factor
    shape = x.shape
    d = shape[-1]
    N = int(np.prod(shape[:-1]))
    xf = reshape(x, (N, d))
    probs = softmax(matmul(xf, params[f"{prefix}.router"]), axis=-1)
    choices = topk_indices(probs.data, k)
    rows = np.arange(N)[:, None]
    selected = index(probs, (rows, choices))                       # [N, k]
    gates = selected if k == 1 else div(selected, sum(selected, axis=1, keepdims=True))
    kept = dispatch(choices, E, capacity_for(N, E, k, cf))
    out = None
    for e in range(E):
        tok, rank = np.nonzero((choices == e) & kept)
        if tok.size == 0:
            continue
        he = dense_ffn(index(xf, tok), index(params[f"{prefix}.w1"], e), index(params[f"{prefix}.b1"], e),
                       index(params[f"{prefix}.w2"], e), index(params[f"{prefix}.b2"], e),
                       v.ffn_activation)
        g = reshape(index(gates, (tok, rank)), (tok.size, 1))
        part = scatter_add(mul(he, g), tok, N)
        out = part if out is None else add(out, part)
    if out is None:
        out = Tensor(np.zeros((N, d)))
    aux = load_balance_loss(probs, choices[:, 0], E)
    y = reshape(out, shape)
    if return_routing:
        return y, aux, {"choices": choices, "kept": kept, "probs": probs.data}
    return y, aux


def moe_ffn(x, params, prefix, config, k=None, capacity_factor=None, return_routing=False):
    """Top-k routing (default experts.k) with gates renormalised over the k picks."""
    k = config.variant.experts_k if k is None else k
    return expert_ffn(x, params, prefix, config, k, capacity_factor, return_routing)


def switch_ffn(x, params, prefix, config, capacity_factor=None, return_routing=False):
    """Top-1 routing; the chosen expert's output is scaled by its router probability."""
    return expert_ffn(x, params, prefix, config, 1, capacity_factor, return_routing)


def expert_layers(config):
    """Layer indices (in each stack) whose feedforward is an expert layer."""
    every = config.variant.experts_every
    return lambda n_layers: [l for l in range(n_layers) if l % every == every - 1]
