"""Closed-form parameter counts and FLOP estimates.

The counts are derived from the configuration alone, independently of the
model-building code, so comparing them with an instantiated
:class:`~workbench.params.ParamStore` checks both.

FLOP convention: a multiply-add is 2 FLOPs, so an [m x k] by [k x n]
matmul costs 2mkn.  Embedding lookups are costed as one-hot matmuls
(2 * rows * width per token), attention logits and value mixing are
included, elementwise work is ignored, and a training step is taken as
three forward passes.  Expert layers count only the activated experts and
the recurrent block of the universal transformer is costed at its step cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import ModelConfig, parse_ints
from .embeddings import TIE_PREFIXES

NOTES = (
    "params: shared tensors counted once",
    "flops: matmul [m,k]x[k,n] = 2mkn; lookups as one-hot matmuls; elementwise ignored",
    "flops: train step = 3 x forward; experts count activated compute only",
    "flops: universal transformer costed at ut.max_steps iterations",
)


@dataclass
class CountReport:
    total_params: int
    breakdown: dict
    flops_forward_per_token: int = 0
    flops_train_step: int = 0
    flops_breakdown: dict = field(default_factory=dict)
    notes: list = field(default_factory=lambda: list(NOTES))

    def rows(self):
        """(component, params, forward flops) for every component."""
        keys = list(self.breakdown) + [k for k in self.flops_breakdown if k not in self.breakdown]
        return [(k, self.breakdown.get(k, 0), self.flops_breakdown.get(k, 0)) for k in keys]


# -- parameter counting -------------------------------------------------------------

def _depth(config, n):
    return min(n, 1) if config.variant.arch_kind == "universal" else n


def _self_kind(config, stack):
    v = config.variant
    if v.arch_kind in ("lightweight-conv", "dynamic-conv"):
        return v.arch_kind.split("-")[0]
    scope = {"enc": "encoder", "dec": "decoder"}[stack]
    if v.arch_kind == "synthesizer" and v.synth_scope in ("all", scope):
        return "synth"
    return "attention"


def _norm_params(config):
    """Scalars per residual sub-block owed to the normalisation scheme."""
    d, kind = config.d_model, config.variant.norm_kind
    return {"layernorm": 2 * d, "rmsnorm": d, "rezero": 1, "rezero+layernorm": 2 * d + 1,
            "rezero+rmsnorm": d + 1, "fixup": 2}[kind]


def _final_norm_params(config):
    v = config.variant
    if not v.norm_final:
        return 0
    kind = v.norm_kind
    if kind in ("layernorm", "rezero+layernorm"):
        return 2 * config.d_model
    if kind in ("rmsnorm", "rezero+rmsnorm"):
        return config.d_model
    return 0


def _attention_params(config):
    return 4 * config.d_model * config.n_heads * config.d_kv


def _synth_params(config, t):
    v, d, hd = config.variant, config.d_model, config.n_heads * config.d_kv
    H = config.n_heads
    n = 2 * d * hd  # values and output
    if v.synth_kind == "dense":
        n += d * hd + hd + hd * t + H * t
    elif v.synth_kind == "random":
        n += H * t * t
    else:
        n += 2 * H * t * v.synth_factor_k
    if v.synth_mix != "pure" or v.synth_kind != "dense":
        n += d * hd
    if v.synth_mix != "pure":
        n += d * hd
    if v.synth_mix == "plus-alpha":
        n += 1
    return n


def _conv_params(config, kind):
    v, d = config.variant, config.d_model
    n = 2 * d * d
    return n + (v.conv_groups * v.conv_width if kind == "lightweight" else d * v.conv_groups * v.conv_width)


def _ffn_params(config):
    d = config.d_model
    if config.variant.ffn_glu_kind != "none":
        f = config.d_ff_glu
        return 3 * d * f + 2 * f + d
    return 2 * d * config.d_ff + config.d_ff + d


def _expert_params(config):
    d, E, f = config.d_model, config.variant.experts_n, config.d_ff_expert
    return d * E + E * (2 * d * f + f + d)


def _is_expert_layer(config, l):
    v = config.variant
    return v.arch_kind in ("moe", "switch") and l % v.experts_every == v.experts_every - 1


def _table_params(config, kind):
    v, V, d = config.variant, config.d_vocab, config.d_model
    if kind == "adaptive-softmax":
        sizes = parse_ints(v.softmax_clusters)
        dims = config.cluster_dims(sizes, v.softmax_dims)
        n = d * (sizes[0] + len(sizes) - 1)
        for c in range(1, len(sizes)):
            w = dims[c] if v.softmax_project else d
            n += (d * w if v.softmax_project else 0) + w * sizes[c]
        return n
    if kind == "adaptive-input":
        sizes = parse_ints(v.embed_adaptive_clusters)
        dims = config.cluster_dims(sizes, v.embed_adaptive_dims)
        return sum(s * w + w * d for s, w in zip(sizes, dims))
    if kind == "factorized":
        return V * v.embed_d_inner + v.embed_d_inner * d
    return V * d


def _embedding_params(config):
    v = config.variant
    prefixes = TIE_PREFIXES[v.embed_tying]
    kinds = {}
    if v.softmax_kind == "adaptive":
        kinds[prefixes["out"]] = "adaptive-softmax"
    for role in ("enc", "dec"):
        p = prefixes[role]
        if p not in kinds:
            kinds[p] = ("adaptive-input" if v.embed_adaptive_clusters
                        else "factorized" if v.embed_factorized else "full")
    if prefixes["out"] not in kinds:
        kinds[prefixes["out"]] = "full"
    return sum(_table_params(config, k) for k in kinds.values())


def _stack_params(config, stack, n_layers):
    """(layer-stack params, position params) for one stack."""
    v = config.variant
    d, H = config.d_model, config.n_heads
    L = _depth(config, n_layers)
    shared = stack in {"block-all": ("enc", "dec"), "encoder-only": ("enc",),
                       "decoder-only": ("dec",)}.get(v.share_scheme, ())
    t = config.max_src_len if stack == "enc" else config.max_tgt_len
    kind = _self_kind(config, stack)
    distinct = min(L, 1) if shared else L
    norm = _norm_params(config)

    per_layer = []
    for l in range(distinct):
        n = norm
        if kind == "attention":
            n += _attention_params(config)
        elif kind == "synth":
            n += _synth_params(config, t)
        else:
            n += _conv_params(config, kind)
        if stack == "dec":
            n += norm + _attention_params(config)
            if v.position_cross_bias and v.position_kind.startswith("relative-bias"):
                n += H * v.position_buckets
        n += norm + (_expert_params(config) if _is_expert_layer(config, l) else _ffn_params(config))
        per_layer.append(n)

    pos = 0
    uses = L if kind in ("attention", "synth") else 0
    pos_layers = min(uses, 1) if shared else uses
    if v.position_kind == "learned":
        pos = t * d
    elif v.position_kind == "relative-bias-shared" and uses:
        pos = H * v.position_buckets
    elif v.position_kind == "relative-bias":
        pos = pos_layers * H * v.position_buckets
    elif v.position_kind == "relative-representation":
        rows = 2 * v.position_clip_k + 1
        pos = pos_layers * rows * config.d_kv * (2 if v.position_value_offsets else 1)

    extra = _final_norm_params(config) if L else 0
    if stack == "dec" and v.arch_kind == "pkm" and L:
        n_half, dk, heads = v.pkm_n_keys_half, v.pkm_d_key, v.pkm_heads
        extra += norm + d * heads * dk + 2 * heads * n_half * (dk // 2) + config.pkm_n_values * d
    if v.arch_kind == "universal" and L:
        extra += d + 1
    return sum(per_layer) + extra, pos


def count_params(config: ModelConfig) -> CountReport:
    """Exact scalar count of ``config``'s model with a per-component breakdown."""
    config.validate()
    v = config.variant
    breakdown = {"embeddings": _embedding_params(config)}
    enc, enc_pos = _stack_params(config, "enc", config.n_enc_layers)
    dec, dec_pos = _stack_params(config, "dec", config.n_dec_layers)
    breakdown["encoder"] = enc
    breakdown["decoder"] = dec
    breakdown["positions"] = enc_pos + dec_pos
    other = 0
    if v.arch_kind == "transparent":
        other += config.n_dec_layers * (config.n_enc_layers + 1)
    if v.softmax_kind == "mos":
        d, K = config.d_model, v.softmax_K
        other += d * K + K * d * d + K * d
    breakdown["output"] = other
    return CountReport(sum(breakdown.values()), breakdown)


# -- FLOP estimation -----------------------------------------------------------------

def _mm(m, k, n):
    return 2 * m * k * n


def _attn_flops(config, tq, tk, offsets=False):
    d, hd = config.d_model, config.n_heads * config.d_kv
    f = _mm(tq, d, hd) + 2 * _mm(tk, d, hd) + _mm(tq, hd, d)
    f += 2 * _mm(tq, config.d_kv, tk) * config.n_heads
    if offsets:
        f += 2 * _mm(tq, config.d_kv, tk) * config.n_heads
    return f


def _self_flops(config, stack, t):
    v = config.variant
    kind = _self_kind(config, stack)
    d, hd, H = config.d_model, config.n_heads * config.d_kv, config.n_heads
    if kind in ("lightweight", "dynamic"):
        f = 2 * _mm(t, d, d) + 2 * t * d * v.conv_width
        if kind == "dynamic":
            f += _mm(t, d, v.conv_groups * v.conv_width)
        return f
    if kind == "synth":
        f = 2 * _mm(t, d, hd) + _mm(t, t, hd)  # values, output, value mixing
        if v.synth_kind == "dense":
            f += _mm(t, d, hd) + H * _mm(t, config.d_kv, t)
        elif v.synth_kind == "factorized":
            f += H * _mm(t, v.synth_factor_k, t)
        if v.synth_mix != "pure":
            f += 2 * _mm(t, d, hd) + H * _mm(t, config.d_kv, t)
        return f
    return _attn_flops(config, t, t, v.position_kind == "relative-representation")


def _ffn_flops(config, t, l):
    v, d = config.variant, config.d_model
    if _is_expert_layer(config, l):
        k = 1 if v.arch_kind == "switch" else v.experts_k
        return _mm(t, d, v.experts_n) + k * 2 * _mm(t, d, config.d_ff_expert)
    if v.ffn_glu_kind != "none":
        return 3 * _mm(t, d, config.d_ff_glu)
    return 2 * _mm(t, d, config.d_ff)


def _lookup_flops(config, tokens, kind):
    v, V, d = config.variant, config.d_vocab, config.d_model
    if kind == "adaptive-input":
        sizes = parse_ints(v.embed_adaptive_clusters)
        dims = config.cluster_dims(sizes, v.embed_adaptive_dims)
        return sum(_mm(tokens, s, w) + _mm(tokens, w, d) for s, w in zip(sizes, dims))
    if kind == "factorized":
        return _mm(tokens, V, v.embed_d_inner) + _mm(tokens, v.embed_d_inner, d)
    if kind == "adaptive-softmax":
        sizes = parse_ints(v.softmax_clusters)
        dims = config.cluster_dims(sizes, v.softmax_dims)
        f = _mm(tokens, sizes[0], d)
        for c in range(1, len(sizes)):
            w = dims[c] if v.softmax_project else d
            f += _mm(tokens, sizes[c], w) + (_mm(tokens, w, d) if v.softmax_project else 0)
        return f
    return _mm(tokens, V, d)


def _input_kind(config):
    v = config.variant
    if v.softmax_kind == "adaptive" and TIE_PREFIXES[v.embed_tying]["enc"] == TIE_PREFIXES[v.embed_tying]["out"]:
        return "adaptive-softmax"
    if v.embed_adaptive_clusters:
        return "adaptive-input"
    return "factorized" if v.embed_factorized else "full"


def _output_flops(config, u):
    v, V, d = config.variant, config.d_vocab, config.d_model
    prefixes = TIE_PREFIXES[v.embed_tying]
    table_kind = _input_kind(config) if prefixes["out"] in (prefixes["enc"], prefixes["dec"]) else "full"
    if v.softmax_kind == "adaptive":
        sizes = parse_ints(v.softmax_clusters)
        dims = config.cluster_dims(sizes, v.softmax_dims)
        f = _mm(u, d, sizes[0] + len(sizes) - 1)
        for c in range(1, len(sizes)):
            w = dims[c] if v.softmax_project else d
            f += (_mm(u, d, w) if v.softmax_project else 0) + _mm(u, w, sizes[c])
        return f
    base = _lookup_flops(config, u, table_kind)
    if v.softmax_kind == "mos":
        K = v.softmax_K
        return _mm(u, d, K) + K * (_mm(u, d, d) + base)
    return base


def estimate_flops(config: ModelConfig, T=512, U=128, batch_tokens=65536) -> CountReport:
    """Forward FLOPs of one (T-token source, U-token target) example under
    the module's convention, plus the train-step figure for
    ``batch_tokens`` source+target tokens."""
    config.validate()
    v = config.variant
    fb = {}
    fb["embeddings"] = _lookup_flops(config, T, _input_kind(config)) + _lookup_flops(config, U, _input_kind(config))

    steps = v.ut_max_steps if v.arch_kind == "universal" else 1
    L_enc, L_dec = config.n_enc_layers, config.n_dec_layers
    enc_layers = _depth(config, L_enc)
    lengths = []
    if v.arch_kind == "funnel" and L_enc:
        t = T
        for b in range(v.funnel_blocks):
            for i in range(v.funnel_layers_per_block):
                if b > 0 and i == 0:
                    tq = -(-t // 2)
                    lengths.append((tq, t))
                    t = tq
                else:
                    lengths.append((t, t))
    else:
        lengths = [(T, T)] * enc_layers
    enc = 0
    for l, (tq, tk) in enumerate(lengths):
        if tq == tk:
            enc += _self_flops(config, "enc", tq)
        else:
            enc += _attn_flops(config, tq, tk)
        enc += _ffn_flops(config, tq, l)
    enc *= steps
    if v.arch_kind == "universal" and enc_layers:
        enc += steps * _mm(T, config.d_model, 1)
    t_mem = lengths[-1][0] if lengths else T
    fb["encoder"] = enc

    dec = 0
    dec_layers = _depth(config, L_dec)
    for l in range(dec_layers):
        dec += _self_flops(config, "dec", U) + _attn_flops(config, U, t_mem) + _ffn_flops(config, U, l)
    dec *= steps
    if v.arch_kind == "universal" and dec_layers:
        dec += steps * _mm(U, config.d_model, 1)
    if v.arch_kind == "pkm" and dec_layers:
        dk, heads = v.pkm_d_key, v.pkm_heads
        dec += heads * (_mm(U, config.d_model, dk) + _mm(U, dk // 2, v.pkm_n_keys_half) * 2
                        + _mm(U, v.pkm_knn, config.d_model))
    if v.arch_kind == "transparent":
        dec += L_dec * (L_enc + 1) * 2 * t_mem * config.d_model
    fb["decoder"] = dec
    fb["output"] = _output_flops(config, U)

    forward = sum(fb.values())
    rep = count_params(config)
    rep.flops_breakdown = fb
    rep.flops_forward_per_token = forward // (T + U)
    rep.flops_train_step = 3 * forward * batch_tokens // (T + U)
    rep.notes = list(NOTES) + [f"flops: T={T}, U={U}, batch_tokens={batch_tokens}"]
    return rep


def forward_flops(config, T=512, U=128):
    """Total forward FLOPs of one example."""
    return sum(estimate_flops(config, T, U).flops_breakdown.values())


# -- presets ----------------------------------------------------------------------

DEPTH_WIDTH = ((24, 1536, 6), (18, 2048, 8), (8, 4608, 18), (6, 6144, 24))


def depth_width_presets(base=None):
    """Baseline plus the four depth/width trades (layers per stack, d_ff, heads)."""
    base = base or ModelConfig.baseline()
    out = [base]
    for layers, d_ff, heads in DEPTH_WIDTH:
        out.append(base.replace(n_enc_layers=layers, n_dec_layers=layers, d_ff=d_ff, n_heads=heads))
    return out
