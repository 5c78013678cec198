"""Named configurations.

``TABLE_PRESETS`` maps each row name of the bundled results tables to a
full-size :class:`ModelConfig` (or ``None`` for rows this codebase does
not implement).  ``TINY_VARIANTS`` maps a short variant name to a tiny
config exercising that modification; it drives the gradient suite and the
learnability checks.
"""

from __future__ import annotations

from .config import ModelConfig

UNSUPPORTED = "unsupported"


def _tiny(**changes):
    model = {k: changes.pop(k) for k in list(changes) if k.startswith("model.")}
    cfg = ModelConfig.tiny(**{k[len("model."):]: v for k, v in model.items()})
    return cfg.with_variant(**changes) if changes else cfg


def tiny_variants():
    """Variant name -> tiny ModelConfig (d_model=8, d_ff=16, H=2, L=2, vocab=11, T=U=5)."""
    v = {
        "baseline": {},
        # activations
        "act-gelu": {"ffn.activation": "gelu"},
        "act-swish": {"ffn.activation": "swish"},
        "act-elu": {"ffn.activation": "elu"},
        "act-selu": {"ffn.activation": "selu"},
        "act-sigmoid": {"ffn.activation": "sigmoid"},
        "act-softplus": {"ffn.activation": "softplus"},
        # gated feedforwards
        "glu": {"ffn.glu_kind": "glu"},
        "reglu": {"ffn.glu_kind": "reglu"},
        "geglu": {"ffn.glu_kind": "geglu"},
        "swiglu": {"ffn.glu_kind": "swiglu"},
        "liglu": {"ffn.glu_kind": "liglu"},
        # normalisation
        "rmsnorm": {"norm.kind": "rmsnorm"},
        "rezero": {"norm.kind": "rezero"},
        "rezero-layernorm": {"norm.kind": "rezero+layernorm"},
        "rezero-rmsnorm": {"norm.kind": "rezero+rmsnorm"},
        "fixup": {"norm.kind": "fixup"},
        "post-norm": {"norm.placement": "post"},
        # depth
        "deep-narrow": {"model.n_enc_layers": 3, "model.n_dec_layers": 3, "model.d_ff": 8},
        # embeddings and tying
        "factorized": {"embed.factorized": True, "embed.d_inner": 4},
        "tie-enc-dec-input": {"embed.tying": "tie-enc-dec-input"},
        "tie-dec-input-output": {"embed.tying": "tie-dec-input-output"},
        "untied": {"embed.tying": "untied"},
        "logit-scale": {"embed.logit_scale": True},
        "adaptive-input": {"embed.adaptive_clusters": "4,4,3", "embed.tying": "untied"},
        "adaptive-input-tied": {"embed.adaptive_clusters": "4,4,3"},
        # parameter sharing
        "share-all": {"share.scheme": "block-all"},
        "share-encoder": {"share.scheme": "encoder-only"},
        "share-decoder": {"share.scheme": "decoder-only"},
        "share-all-factorized": {"share.scheme": "block-all", "embed.factorized": True,
                                 "embed.d_inner": 4, "embed.tying": "tie-enc-dec-input"},
        # output softmax
        "adaptive-softmax": {"softmax.kind": "adaptive", "softmax.clusters": "4,4,3",
                             "embed.tying": "untied"},
        "adaptive-softmax-tied": {"softmax.kind": "adaptive", "softmax.clusters": "4,4,3"},
        "adaptive-softmax-noproj": {"softmax.kind": "adaptive", "softmax.clusters": "4,4,3",
                                    "softmax.project": False, "embed.tying": "untied"},
        "mos": {"softmax.kind": "mos", "softmax.K": 3},
        # positions
        "pos-sinusoidal": {"position.kind": "sinusoidal"},
        "pos-learned": {"position.kind": "learned"},
        "pos-relative-bias": {"position.kind": "relative-bias"},
        "pos-relative-representation": {"position.kind": "relative-representation", "position.clip_k": 2},
        "pos-relative-representation-values": {"position.kind": "relative-representation",
                                               "position.clip_k": 2, "position.value_offsets": True},
        "pos-none": {"position.kind": "none"},
        "pos-cross-bias": {"position.cross_bias": True},
        # whole-block architectures
        "transparent": {"arch.kind": "transparent"},
        "synth-dense": {"arch.kind": "synthesizer", "synth.kind": "dense"},
        "synth-dense-plus": {"arch.kind": "synthesizer", "synth.kind": "dense", "synth.mix": "plus"},
        "synth-dense-plus-alpha": {"arch.kind": "synthesizer", "synth.kind": "dense",
                                   "synth.mix": "plus-alpha"},
        "synth-random": {"arch.kind": "synthesizer", "synth.kind": "random"},
        "synth-random-plus": {"arch.kind": "synthesizer", "synth.kind": "random", "synth.mix": "plus"},
        "synth-random-plus-alpha": {"arch.kind": "synthesizer", "synth.kind": "random",
                                    "synth.mix": "plus-alpha"},
        "synth-factorized": {"arch.kind": "synthesizer", "synth.kind": "factorized", "synth.factor_k": 2},
        "synth-all-scopes": {"arch.kind": "synthesizer", "synth.scope": "all"},
        "funnel": {"arch.kind": "funnel", "funnel.blocks": 2, "funnel.layers_per_block": 1},
        "lightweight-conv": {"arch.kind": "lightweight-conv", "conv.width": 3, "conv.groups": 2},
        "dynamic-conv": {"arch.kind": "dynamic-conv", "conv.width": 3, "conv.groups": 2},
        "moe": {"arch.kind": "moe", "experts.n": 4, "experts.k": 2},
        "switch": {"arch.kind": "switch", "experts.n": 4},
        "pkm": {"arch.kind": "pkm", "pkm.n_keys_half": 4, "pkm.knn": 3, "pkm.d_key": 4},
        "universal": {"arch.kind": "universal", "ut.max_steps": 3},
    }
    return {name: _tiny(**dict(changes)) for name, changes in v.items()}


TINY_VARIANTS = tiny_variants()


# -- full-size presets for the rows of the bundled results tables ---------------------

_SHARED_TYING = {"embed.tying": "tie-enc-dec-input"}
_ADAPTIVE = "2500,6000,23500"

_TABLE_ROWS = {
    "Vanilla Transformer": {},
    "GeLU": {"ffn.activation": "gelu"},
    "Swish": {"ffn.activation": "swish"},
    "ELU": {"ffn.activation": "elu"},
    "GLU": {"ffn.glu_kind": "glu"},
    "GeGLU": {"ffn.glu_kind": "geglu"},
    "ReGLU": {"ffn.glu_kind": "reglu"},
    "SeLU": {"ffn.activation": "selu"},
    "SwiGLU": {"ffn.glu_kind": "swiglu"},
    "LiGLU": {"ffn.glu_kind": "liglu"},
    "Sigmoid": {"ffn.activation": "sigmoid"},
    "Softplus": {"ffn.activation": "softplus"},
    "RMS Norm": {"norm.kind": "rmsnorm"},
    "Rezero": {"norm.kind": "rezero"},
    "Rezero + LayerNorm": {"norm.kind": "rezero+layernorm"},
    "Rezero + RMS Norm": {"norm.kind": "rezero+rmsnorm"},
    "Fixup": {"norm.kind": "fixup"},
    "24 layers, d_ff = 1536, H = 6": {"model.n_enc_layers": 24, "model.n_dec_layers": 24,
                                      "model.d_ff": 1536, "model.n_heads": 6},
    "18 layers, d_ff = 2048, H = 8": {"model.n_enc_layers": 18, "model.n_dec_layers": 18,
                                      "model.d_ff": 2048, "model.n_heads": 8},
    "8 layers, d_ff = 4608, H = 18": {"model.n_enc_layers": 8, "model.n_dec_layers": 8,
                                      "model.d_ff": 4608, "model.n_heads": 18},
    "6 layers, d_ff = 6144, H = 24": {"model.n_enc_layers": 6, "model.n_dec_layers": 6,
                                      "model.d_ff": 6144, "model.n_heads": 24},
    "Block sharing": {"share.scheme": "block-all", **_SHARED_TYING},
    "+ Factorized embeddings": {"share.scheme": "block-all", "embed.factorized": True, **_SHARED_TYING},
    "+ Factorized and shared embeddings": {"share.scheme": "block-all", "embed.factorized": True},
    "Encoder only block sharing": {"share.scheme": "encoder-only", **_SHARED_TYING},
    "Decoder only block sharing": {"share.scheme": "decoder-only", **_SHARED_TYING},
    "Factorized Embedding": {"embed.factorized": True, **_SHARED_TYING},
    "Factorized and shared embeddings": {"embed.factorized": True},
    "Tied encoder/decoder input embeddings": {"embed.tying": "tie-enc-dec-input"},
    "Tied decoder input and output embeddings": {"embed.tying": "tie-dec-input-output"},
    "Untied embeddings": {"embed.tying": "untied"},
    "Adaptive input embeddings": {"embed.adaptive_clusters": _ADAPTIVE, "embed.adaptive_dims": "768,192,48"},
    "Adaptive softmax": {"softmax.kind": "adaptive", "softmax.clusters": _ADAPTIVE,
                         "softmax.dims": "768,192,48"},
    "Adaptive softmax without projection": {"softmax.kind": "adaptive", "softmax.clusters": _ADAPTIVE,
                                            "softmax.project": False},
    "Mixture of softmaxes": {"softmax.kind": "mos", "softmax.K": 15},
    "Relative attention with bias": {"position.kind": "relative-bias"},
    "Relative attention with shared bias": {"position.kind": "relative-bias-shared"},
    "Relative position representation": {"position.kind": "relative-representation"},
    "Sinusoidal positional encoding": {"position.kind": "sinusoidal"},
    "Transparent attention": {"arch.kind": "transparent"},
    "Dynamic convolution": {"arch.kind": "dynamic-conv"},
    "Lightweight convolution": {"arch.kind": "lightweight-conv"},
    "Evolved Transformer": UNSUPPORTED,
    "Synthesizer (dense)": {"arch.kind": "synthesizer", "synth.kind": "dense"},
    "Synthesizer (dense plus)": {"arch.kind": "synthesizer", "synth.kind": "dense", "synth.mix": "plus"},
    "Synthesizer (dense plus alpha)": {"arch.kind": "synthesizer", "synth.kind": "dense",
                                       "synth.mix": "plus-alpha"},
    "Synthesizer (factorized)": {"arch.kind": "synthesizer", "synth.kind": "factorized"},
    "Synthesizer (random)": {"arch.kind": "synthesizer", "synth.kind": "random"},
    "Synthesizer (random plus)": {"arch.kind": "synthesizer", "synth.kind": "random", "synth.mix": "plus"},
    "Synthesizer (random plus alpha)": {"arch.kind": "synthesizer", "synth.kind": "random",
                                        "synth.mix": "plus-alpha"},
    "Universal Transformer": {"arch.kind": "universal"},
    "Mixture of experts": {"arch.kind": "moe", "experts.every": 4, "experts.d_ff": 1536},
    "Switch Transformer": {"arch.kind": "switch", "experts.every": 4},
    "Funnel Transformer": {"arch.kind": "funnel"},
    "Weighted Transformer": UNSUPPORTED,
    "Product key memory": {"arch.kind": "pkm", "pkm.n_keys_half": 512, "pkm.d_key": 512},
}


def _full(changes):
    model = {k[len("model."):]: v for k, v in changes.items() if k.startswith("model.")}
    variant = {k: v for k, v in changes.items() if not k.startswith("model.")}
    cfg = ModelConfig.baseline(**model)
    return cfg.with_variant(**variant) if variant else cfg


TABLE_PRESETS = {name: (UNSUPPORTED if ch == UNSUPPORTED else _full(ch)) for name, ch in _TABLE_ROWS.items()}


def table_preset(name):
    """Preset for a results-table row name (case-insensitive); KeyError if unknown."""
    for key, value in TABLE_PRESETS.items():
        if key.lower() == name.strip().lower():
            return value
    raise KeyError(name)


def slug(name):
    out = "".join(c.lower() if c.isalnum() else "-" for c in name)
    while "--" in out:
        out = out.replace("--", "-")
    return out.strip("-")


def learnability_config():
    """Tiny baseline used for the copy-task accuracy gate: 2+2 layers, d_model=64."""
    return ModelConfig(n_enc_layers=2, n_dec_layers=2, d_model=64, d_ff=256, d_kv=16, n_heads=4,
                       d_vocab=32, max_src_len=16, max_tgt_len=16)


def _rescale_clusters(text, vocab):
    sizes = [int(s) for s in text.split(",")]
    total = sum(sizes)
    scaled = [max(1, s * vocab // total) for s in sizes[:-1]]
    return ",".join(str(s) for s in scaled + [vocab - sum(scaled)])


def at_task_scale(config, vocab=32, length=16):
    """``config`` with its vocabulary and sequence limits sized for a task of
    ``length`` tokens over ``vocab`` ids; cluster sizes are rescaled to match."""
    v = config.variant
    changes = {}
    if v.embed_adaptive_clusters:
        changes["embed.adaptive_clusters"] = _rescale_clusters(v.embed_adaptive_clusters, vocab)
    if v.softmax_kind == "adaptive":
        changes["softmax.clusters"] = _rescale_clusters(v.softmax_clusters, vocab)
    cfg = config.replace(d_vocab=vocab, max_src_len=length, max_tgt_len=length)
    return cfg.with_variant(**changes) if changes else cfg
