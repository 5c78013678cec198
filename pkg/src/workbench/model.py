"""Encoder-decoder transformer assembled from a :class:`ModelConfig`.

The model is pre-norm by default (``x + F(norm(x))`` per sub-block, one
final norm per stack), takes token id 0 as the decoder's start symbol and
computes the mean token cross-entropy under teacher forcing.  Every
modification is selected through ``config.variant``; parameter names are
stable strings such as ``enc.3.self.q`` or ``dec.0.ffn.w1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .act_norm import (apply_directives, base_norm, branch_input, declare_norm,
                       declare_subblock_norm, feed_forward, ffn_matrices, fixup_init,
                       normalize, sublayer)
from .arch.conv import conv_block, conv_inputs, declare_conv
from .arch.experts import declare_experts, moe_ffn, switch_ffn
from .arch.funnel import funnel_encode
from .arch.pkm import declare_pkm, pkm_lookup
from .arch.synthesizer import declare_synthesizer, synthesizer_attention, synthesizer_inputs
from .arch.transparent import declare_transparent, transparent_attention_memory
from .arch.universal import declare_halting, halting_unit, universal_step
from .attention import attention_mask, declare_attention, multihead_attention
from .embeddings import MixtureOfSoftmaxes, apply_sharing, build_embedding_tables, build_tables
from .errors import DataError
from .numerics import Init, Tensor, add, div, index, log_softmax, mul, neg, sum
from .params import ParamStore
from .positional import PositionalProvider, bucket_matrix

BOS = 0


@dataclass(frozen=True)
class SubBlock:
    """One residual sub-block: its parameter prefix, role and the matrices
    on its input and output side."""

    prefix: str
    kind: str
    stack: str
    layer: int
    inputs: tuple = ()
    outputs: tuple = ()


def stack_depth(config, stack):
    """Number of distinct layers a stack declares (1 for the recurrent block)."""
    n = config.n_enc_layers if stack == "enc" else config.n_dec_layers
    if config.variant.arch_kind == "universal":
        return min(n, 1)
    return n


def self_kind(config, stack):
    v = config.variant
    if v.arch_kind in ("lightweight-conv", "dynamic-conv"):
        return v.arch_kind.split("-")[0]
    if v.arch_kind == "synthesizer" and v.synth_scope in ("all", {"enc": "encoder", "dec": "decoder"}[stack]):
        return "synth"
    return "attention"


def expert_layer_ids(config, stack):
    v = config.variant
    if v.arch_kind not in ("moe", "switch"):
        return set()
    every = v.experts_every
    return {l for l in range(stack_depth(config, stack)) if l % every == every - 1}


def subblock_layout(config):
    """Every residual sub-block of the model, in execution order per stack."""
    blocks = []
    for stack in ("enc", "dec"):
        experts = expert_layer_ids(config, stack)
        L = stack_depth(config, stack)
        for l in range(L):
            if stack == "dec" and config.variant.arch_kind == "pkm" and l == L - 1:
                blocks.append(SubBlock("dec.pkm", "pkm", "dec", l, ("dec.pkm.query",), ("dec.pkm.values",)))
            p = f"{stack}.{l}.self"
            kind = self_kind(config, stack)
            if kind == "synth":
                blocks.append(SubBlock(p, kind, stack, l, tuple(synthesizer_inputs(p, config)), (f"{p}.o",)))
            elif kind == "attention":
                blocks.append(SubBlock(p, kind, stack, l, (f"{p}.q", f"{p}.k", f"{p}.v"), (f"{p}.o",)))
            else:
                blocks.append(SubBlock(p, kind, stack, l, tuple(conv_inputs(p, kind)), (f"{p}.w_out",)))
            if stack == "dec":
                p = f"dec.{l}.cross"
                blocks.append(SubBlock(p, "cross", stack, l, (f"{p}.q", f"{p}.k", f"{p}.v"), (f"{p}.o",)))
            p = f"{stack}.{l}.ffn"
            if l in experts:
                blocks.append(SubBlock(p, "experts", stack, l, (f"{p}.w1",), (f"{p}.w2",)))
            else:
                ins, outs = ffn_matrices(p, config)
                blocks.append(SubBlock(p, "ffn", stack, l, tuple(ins), tuple(outs)))
    return blocks


def has_final_norm(config, stack):
    return (config.variant.norm_final and base_norm(config.variant.norm_kind) is not None
            and stack_depth(config, stack) > 0)


def build_params(config, seed=0):
    """Declare and initialise every parameter of ``config``'s model."""
    config.validate()
    v = config.variant
    store = ParamStore(seed)
    build_embedding_tables(config, store)
    positions = PositionalProvider(config)
    for stack in ("enc", "dec"):
        L = stack_depth(config, stack)
        uses = [l for l in range(L) if self_kind(config, stack) in ("attention", "synth")]
        if positions.path in ("additive",) or uses:
            positions.declare(store, stack, uses)
    for b in subblock_layout(config):
        declare_subblock_norm(store, b.prefix, config)
        if b.kind in ("attention", "cross"):
            declare_attention(store, b.prefix, config)
            if b.kind == "cross" and v.position_cross_bias and positions.path == "bias":
                store.add(f"{b.prefix}.relbias", (config.n_heads, v.position_buckets), Init.zeros())
        elif b.kind == "synth":
            t_max = config.max_src_len if b.stack == "enc" else config.max_tgt_len
            declare_synthesizer(store, b.prefix, config, t_max)
        elif b.kind in ("lightweight", "dynamic"):
            declare_conv(store, b.prefix, config, b.kind)
        elif b.kind == "ffn":
            from .act_norm import declare_ffn
            declare_ffn(store, b.prefix, config)
        elif b.kind == "experts":
            declare_experts(store, b.prefix, config)
        elif b.kind == "pkm":
            declare_pkm(store, b.prefix, config)
    for stack in ("enc", "dec"):
        if has_final_norm(config, stack):
            declare_norm(store, f"{stack}.final", config)
    if v.arch_kind == "transparent":
        declare_transparent(store, config)
    if v.arch_kind == "universal":
        for stack in ("enc", "dec"):
            if stack_depth(config, stack):
                declare_halting(store, f"{stack}.ut", config)
    if v.softmax_kind == "mos":
        MixtureOfSoftmaxes("mos", config, build_tables(config)["out"]).declare(store)
    if v.norm_kind == "fixup":
        apply_directives(store, fixup_init(config))
    apply_sharing(store, v.share_scheme)
    return store


@dataclass
class Batch:
    """Source ids x [B, T], target ids y [B, U]; masks are 1/True where valid."""

    x: np.ndarray
    y: np.ndarray
    loss_mask: np.ndarray | None = None
    x_mask: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.y.ndim != 2:
            raise DataError("x and y must be [batch, length] integer arrays")
        if self.x.shape[0] != self.y.shape[0]:
            raise DataError("x and y disagree on batch size")
        if self.loss_mask is None:
            self.loss_mask = np.ones(self.y.shape)
        self.loss_mask = np.asarray(self.loss_mask, dtype=np.float64)
        if self.loss_mask.shape != self.y.shape:
            raise DataError("loss_mask must match y")
        if self.x_mask is not None:
            self.x_mask = np.asarray(self.x_mask, dtype=bool)
            if self.x_mask.shape != self.x.shape:
                raise DataError("x_mask must match x")
            if not self.x_mask.any(axis=1).all():
                raise DataError("every source row needs at least one valid token")

    def decoder_input(self):
        """Targets shifted right behind the start symbol."""
        bos = np.full((self.y.shape[0], 1), BOS, dtype=np.int64)
        return np.concatenate([bos, self.y[:, :-1]], axis=1)


@dataclass
class Encoded:
    memories: list
    mask: np.ndarray
    positions: np.ndarray


@dataclass
class ForwardOutput:
    loss: Tensor
    ce: Tensor
    aux: list = field(default_factory=list)
    log_probs: Tensor | None = None
    hidden: Tensor | None = None


class Model:
    """Forward computation for one config over a :class:`ParamStore`."""

    def __init__(self, config, params=None, seed=0):
        config.validate()
        self.config = config
        self.params = params if params is not None else build_params(config, seed)
        self.tables = build_tables(config)
        self.positions = PositionalProvider(config)
        self.mos = (MixtureOfSoftmaxes("mos", config, self.tables["out"])
                    if config.variant.softmax_kind == "mos" else None)

    # -- building blocks ---------------------------------------------------------

    def embed(self, stack, ids):
        """Token lookup plus the additive position table, if any."""
        h = self.tables[stack].lookup(self.params, ids)
        pos = self.positions.additive(self.params, stack, ids.shape[1])
        return h if pos is None else add(h, pos)

    def _self_branch(self, stack, l, z, q_pos, key_mask, causal, kv=None):
        P, cfg = self.params, self.config
        prefix = f"{stack}.{l}.self"
        kind = self_kind(cfg, stack)
        if kind in ("lightweight", "dynamic"):
            return conv_block(P, prefix, cfg, z, kind, causal)
        src, k_pos, k_mask = (z, q_pos, key_mask) if kv is None else kv
        mask = attention_mask(k_mask, q_pos, k_pos, causal)
        bias = self.positions.bias(P, stack, l, q_pos, k_pos)
        if kind == "synth":
            t_max = cfg.max_src_len if stack == "enc" else cfg.max_tgt_len
            return synthesizer_attention(P, prefix, cfg, z, t_max, mask, bias)
        offsets = self.positions.offsets(P, stack, l, q_pos, k_pos)
        return multihead_attention(P, prefix, cfg, z, src, mask, bias, offsets)

    def _ffn(self, stack, l, h, aux):
        P, cfg = self.params, self.config
        prefix = f"{stack}.{l}.ffn"
        if l not in expert_layer_ids(cfg, stack):
            return sublayer(P, prefix, cfg, h, lambda z: feed_forward(z, P, prefix, cfg))

        def branch(z):
            route = switch_ffn if cfg.variant.arch_kind == "switch" else moe_ffn
            y, balance = route(z, P, prefix, cfg)
            aux.append(mul(balance, cfg.variant.experts_aux_weight))
            return y

        return sublayer(P, prefix, cfg, h, branch)

    def _enc_layer(self, l, h, mask, pos, aux, kv=None):
        P, cfg = self.params, self.config
        prefix = f"enc.{l}.self"
        if kv is None:
            h = sublayer(P, prefix, cfg, h, lambda z: self._self_branch("enc", l, z, pos, mask, False))
        else:
            full, full_mask, full_pos = kv
            src = branch_input(P, prefix, cfg, full)
            h = sublayer(P, prefix, cfg, h, lambda z: self._self_branch(
                "enc", l, z, pos, mask, False, kv=(src, full_pos, full_mask)))
        return self._ffn("enc", l, h, aux)

    def _dec_layer(self, l, h, pos, enc, memory, aux):
        P, cfg, v = self.params, self.config, self.config.variant
        if v.arch_kind == "pkm" and l == stack_depth(cfg, "dec") - 1:
            h = sublayer(P, "dec.pkm", cfg, h, lambda z: pkm_lookup(z, P, "dec.pkm", cfg))
        prefix = f"dec.{l}.self"
        h = sublayer(P, prefix, cfg, h, lambda z: self._self_branch("dec", l, z, pos, None, True))
        prefix = f"dec.{l}.cross"
        cmask = attention_mask(enc.mask, pos, enc.positions, False)
        cbias = None
        if f"{prefix}.relbias" in P:
            buckets = bucket_matrix(pos, enc.positions, v.position_buckets, v.position_max_distance, True)
            cbias = index(P[f"{prefix}.relbias"], (slice(None), buckets))
        h = sublayer(P, prefix, cfg, h,
                     lambda z: multihead_attention(P, prefix, cfg, z, memory, cmask, cbias))
        return self._ffn("dec", l, h, aux)

    # -- stacks ----------------------------------------------------------------

    def encode(self, x, x_mask=None, aux=None):
        P, cfg, v = self.params, self.config, self.config.variant
        aux = [] if aux is None else aux
        x = np.asarray(x)
        B, T = x.shape
        mask = np.ones((B, T), dtype=bool) if x_mask is None else np.asarray(x_mask, dtype=bool)
        pos = np.arange(T)
        h = self.embed("enc", x)
        outputs = [h]
        L = stack_depth(cfg, "enc")
        if L and v.arch_kind == "universal":
            h, ponder = universal_step(h, lambda s: self._enc_layer(0, s, mask, pos, aux),
                                       halting_unit(P, "enc.ut"), v.ut_max_steps, v.ut_threshold)
            aux.append(mul(ponder, v.ut_ponder_weight))
        elif L and v.arch_kind == "funnel":
            h, mask, pos = funnel_encode(
                h, lambda l, hh, m, p, kv: self._enc_layer(l, hh, m, p, aux, kv),
                v.funnel_blocks, v.funnel_layers_per_block, mask, pos)
        else:
            for l in range(L):
                h = self._enc_layer(l, h, mask, pos, aux)
                outputs.append(h)

        def final(t):
            return normalize(P, "enc.final", cfg, t) if has_final_norm(cfg, "enc") else t

        n_dec = max(stack_depth(cfg, "dec"), 1)
        if v.arch_kind == "transparent":
            memories = [final(m) for m in transparent_attention_memory(outputs, P["dec.transparent"])]
        else:
            memories = [final(h)] * n_dec
        return Encoded(memories, mask, pos)

    def decode(self, y_in, enc, aux=None):
        P, cfg, v = self.params, self.config, self.config.variant
        aux = [] if aux is None else aux
        y_in = np.asarray(y_in)
        pos = np.arange(y_in.shape[1])
        h = self.embed("dec", y_in)
        L = stack_depth(cfg, "dec")
        if L and v.arch_kind == "universal":
            h, ponder = universal_step(h, lambda s: self._dec_layer(0, s, pos, enc, enc.memories[0], aux),
                                       halting_unit(P, "dec.ut"), v.ut_max_steps, v.ut_threshold)
            aux.append(mul(ponder, v.ut_ponder_weight))
        else:
            for l in range(L):
                h = self._dec_layer(l, h, pos, enc, enc.memories[l], aux)
        if has_final_norm(cfg, "dec"):
            h = normalize(P, "dec.final", cfg, h)
        return h

    # -- outputs -----------------------------------------------------------------

    def _scaled(self, h):
        if self.config.variant.embed_logit_scale:
            return mul(h, self.config.d_model ** -0.5)
        return h

    def log_probs(self, h):
        """Full-vocabulary log-probabilities [..., d_vocab] from decoder states."""
        h = self._scaled(h)
        out = self.tables["out"]
        if self.config.variant.softmax_kind == "adaptive":
            return out.log_probs(self.params, h)
        if self.mos is not None:
            return self.mos.log_probs(self.params, h)
        return log_softmax(out.logits(self.params, h))

    def target_log_probs(self, h, y):
        if self.config.variant.softmax_kind == "adaptive":
            return self.tables["out"].target_log_probs(self.params, self._scaled(h), y)
        lp = self.log_probs(h)
        B, U = y.shape
        return index(lp, (np.arange(B)[:, None], np.arange(U)[None, :], y)), lp

    def forward(self, batch, need_log_probs=False):
        """Teacher-forced loss: mean masked token NLL plus auxiliary losses."""
        aux = []
        enc = self.encode(batch.x, batch.x_mask, aux)
        h = self.decode(batch.decoder_input(), enc, aux)
        if np.any((batch.y < 0) | (batch.y >= self.config.d_vocab)):
            raise DataError(f"target id outside [0, {self.config.d_vocab})")
        got = self.target_log_probs(h, batch.y)
        if isinstance(got, tuple):
            tgt, lp = got
        else:
            tgt, lp = got, (self.log_probs(h) if need_log_probs else None)
        mask = batch.loss_mask
        ce = neg(div(sum(mul(tgt, mask)), max(float(mask.sum()), 1.0)))
        loss = ce
        for a in aux:
            loss = add(loss, a)
        return ForwardOutput(loss, ce, aux, lp, h)


def build_model(config, seed=0):
    return Model(config, build_params(config, seed))


def forward_loss(config, params, batch):
    """Scalar training loss of ``config``'s model over ``params`` on ``batch``."""
    return Model(config, params).forward(batch).loss


def token_accuracy(log_probs, y, mask=None):
    """Fraction of (masked) positions whose argmax equals the target."""
    pred = np.argmax(log_probs.data if isinstance(log_probs, Tensor) else log_probs, axis=-1)
    hit = (pred == np.asarray(y)).astype(np.float64)
    if mask is None:
        return float(hit.mean())
    mask = np.asarray(mask, dtype=np.float64)
    return float((hit * mask).sum() / max(mask.sum(), 1.0))
