"""Model configuration, variant selection and the ``key = value`` spec format.

A spec file is UTF-8 text with one ``key = value`` per line and ``#``
comments.  Keys starting with ``model.`` set structural hyperparameters;
every other key selects or tunes a modification, e.g.::

    # SwiGLU feedforward with RMS norm
    model.n_enc_layers = 2
    ffn.glu_kind = swiglu
    norm.kind = rmsnorm

Unknown keys are rejected and every key has a default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError, ParseError

POSITION_KINDS = ("sinusoidal", "learned", "relative-bias-shared", "relative-bias",
                  "relative-representation", "none")
ACTIVATIONS = ("relu", "gelu", "swish", "elu", "selu", "sigmoid", "softplus")
GLU_KINDS = ("none", "glu", "reglu", "geglu", "swiglu", "liglu")
NORM_KINDS = ("layernorm", "rmsnorm", "rezero", "rezero+layernorm", "rezero+rmsnorm", "fixup")
TYINGS = ("tie-all", "tie-enc-dec-input", "tie-dec-input-output", "untied")
SHARE_SCHEMES = ("none", "block-all", "encoder-only", "decoder-only")
SOFTMAX_KINDS = ("full", "adaptive", "mos")
ARCH_KINDS = ("vanilla", "transparent", "synthesizer", "funnel", "lightweight-conv",
              "dynamic-conv", "moe", "switch", "pkm", "universal")
SYNTH_KINDS = ("dense", "random", "factorized")
SYNTH_MIXES = ("pure", "plus", "plus-alpha")
SCOPES = ("encoder", "decoder", "all")


@dataclass(frozen=True)
class VariantSpec:
    """Flat selection of modifications; field ``a_b`` is spec key ``a.b``."""

    position_kind: str = "relative-bias-shared"
    position_buckets: int = 32
    position_max_distance: int = 128
    position_clip_k: int = 16
    position_value_offsets: bool = False
    position_cross_bias: bool = False

    ffn_activation: str = "relu"
    ffn_glu_kind: str = "none"
    ffn_d_ff_glu: int = 0  # 0: two thirds of d_ff rounded to a multiple of H

    norm_kind: str = "layernorm"
    norm_placement: str = "pre"
    norm_final: bool = True
    norm_eps: float = 1e-6

    embed_tying: str = "tie-all"
    embed_factorized: bool = False
    embed_d_inner: int = 128
    embed_adaptive_clusters: str = ""
    embed_adaptive_dims: str = ""
    embed_logit_scale: bool = False

    share_scheme: str = "none"

    softmax_kind: str = "full"
    softmax_K: int = 15
    softmax_project: bool = True
    softmax_clusters: str = ""
    softmax_dims: str = ""

    arch_kind: str = "vanilla"
    experts_n: int = 32
    experts_k: int = 2
    experts_capacity_factor: float = 1.25  # 0 disables dropping
    experts_d_ff: int = 0  # 0: same as d_ff
    experts_every: int = 1
    experts_aux_weight: float = 0.01
    pkm_knn: int = 32
    pkm_n_keys_half: int = 128
    pkm_n_values: int = 0  # 0: n_keys_half ** 2
    pkm_d_key: int = 256
    pkm_heads: int = 1
    conv_width: int = 9
    conv_groups: int = 16
    funnel_blocks: int = 3
    funnel_layers_per_block: int = 4
    ut_max_steps: int = 24
    ut_threshold: float = 0.5
    ut_ponder_weight: float = 0.01
    synth_kind: str = "dense"
    synth_mix: str = "pure"
    synth_scope: str = "encoder"
    synth_factor_k: int = 8


@dataclass(frozen=True)
class ModelConfig:
    n_enc_layers: int = 12
    n_dec_layers: int = 12
    d_model: int = 768
    d_ff: int = 3072
    d_kv: int = 64
    n_heads: int = 12
    d_vocab: int = 32000
    max_src_len: int = 512
    max_tgt_len: int = 512
    variant: VariantSpec = field(default_factory=VariantSpec)

    @classmethod
    def baseline(cls, **kw):
        """The 12+12 layer, d_model=768 model used as the comparison point."""
        return cls(**kw)

    @classmethod
    def tiny(cls, **kw):
        """Gradient-check scale: d_model=8, d_ff=16, H=2, L=2, vocab=11, T=U=5."""
        base = dict(n_enc_layers=2, n_dec_layers=2, d_model=8, d_ff=16, d_kv=4,
                    n_heads=2, d_vocab=11, max_src_len=5, max_tgt_len=5)
        base.update(kw)
        return cls(**base)

    def with_variant(self, **changes):
        """Copy with variant fields replaced; accepts dotted or underscored keys."""
        kw = {k.replace(".", "_"): v for k, v in changes.items()}
        return replace(self, variant=replace(self.variant, **kw))

    def replace(self, **changes):
        return replace(self, **changes)

    # derived quantities used by both the model and the accounting

    @property
    def d_ff_glu(self):
        v = self.variant
        if v.ffn_d_ff_glu:
            return v.ffn_d_ff_glu
        raw = 2 * self.d_ff / 3
        return max(self.n_heads, int(round(raw / self.n_heads)) * self.n_heads)

    @property
    def d_ff_expert(self):
        return self.variant.experts_d_ff or self.d_ff

    @property
    def pkm_n_values(self):
        return self.variant.pkm_n_values or self.variant.pkm_n_keys_half ** 2

    def softmax_clusters(self):
        return parse_ints(self.variant.softmax_clusters)

    def adaptive_clusters(self):
        return parse_ints(self.variant.embed_adaptive_clusters)

    def cluster_dims(self, sizes, dims_text):
        dims = parse_ints(dims_text)
        if dims:
            return dims
        return [max(1, self.d_model // 4 ** c) for c in range(len(sizes))]

    def validate(self):
        """Raise ConfigError listing every violated constraint."""
        problems = []
        v = self.variant
        for name in ("n_enc_layers", "n_dec_layers"):
            if getattr(self, name) < 0:
                problems.append(f"{name} must be >= 0")
        for name in ("d_model", "d_ff", "d_kv", "n_heads", "d_vocab", "max_src_len", "max_tgt_len"):
            if getattr(self, name) <= 0:
                problems.append(f"{name} must be positive")
        choices = {
            "position_kind": POSITION_KINDS, "ffn_activation": ACTIVATIONS,
            "ffn_glu_kind": GLU_KINDS, "norm_kind": NORM_KINDS, "embed_tying": TYINGS,
            "share_scheme": SHARE_SCHEMES, "softmax_kind": SOFTMAX_KINDS,
            "arch_kind": ARCH_KINDS, "synth_kind": SYNTH_KINDS, "synth_mix": SYNTH_MIXES,
            "synth_scope": SCOPES, "norm_placement": ("pre", "post"),
        }
        for name, allowed in choices.items():
            if getattr(v, name) not in allowed:
                problems.append(f"{spec_key(name)}={getattr(v, name)!r} not in {allowed}")
        if problems:
            raise ConfigError("; ".join(problems))

        if v.position_kind == "sinusoidal" and self.d_model % 2:
            problems.append("sinusoidal positions need an even d_model")
        if v.position_kind.startswith("relative-bias") and v.position_buckets < 2:
            problems.append("position.buckets must be >= 2")
        if v.position_kind == "relative-representation" and v.position_clip_k < 1:
            problems.append("position.clip_k must be >= 1")
        if v.norm_placement == "post" and v.norm_kind not in ("layernorm", "rmsnorm"):
            problems.append("post-norm wiring needs norm.kind layernorm or rmsnorm")
        if v.embed_factorized and v.embed_d_inner >= self.d_model:
            problems.append("embed.d_inner must be smaller than d_model")
        if v.embed_factorized and (v.embed_adaptive_clusters or v.softmax_kind == "adaptive"):
            problems.append("factorized embeddings cannot be combined with adaptive clusters")
        for label, sizes in (("embed.adaptive_clusters", self.adaptive_clusters()),
                             ("softmax.clusters", self.softmax_clusters())):
            if sizes and sum(sizes) != self.d_vocab:
                problems.append(f"{label} sizes sum to {sum(sizes)}, not d_vocab={self.d_vocab}")
            if sizes and min(sizes) <= 0:
                problems.append(f"{label} sizes must be positive")
        if v.softmax_kind == "adaptive":
            if not self.softmax_clusters():
                problems.append("softmax.kind=adaptive needs softmax.clusters")
            if v.embed_adaptive_clusters:
                problems.append("adaptive softmax supplies its own input clusters")
        for sizes_text, dims_text, label in (
                (v.embed_adaptive_clusters, v.embed_adaptive_dims, "embed.adaptive_dims"),
                (v.softmax_clusters, v.softmax_dims, "softmax.dims")):
            sizes, dims = parse_ints(sizes_text), parse_ints(dims_text)
            if dims and len(dims) != len(sizes):
                problems.append(f"{label} needs one dim per cluster")
            if dims and any(a < b for a, b in zip(dims, dims[1:])):
                problems.append(f"{label} must be non-increasing")
        if v.softmax_kind == "mos" and v.softmax_K < 1:
            problems.append("softmax.K must be >= 1")
        if v.ffn_glu_kind != "none" and v.arch_kind in ("moe", "switch"):
            problems.append("GLU feedforward inside expert layers is unsupported")

        arch = v.arch_kind
        if arch in ("moe", "switch"):
            k = 1 if arch == "switch" else v.experts_k
            if v.experts_n < 1:
                problems.append("experts.n must be >= 1")
            if not 1 <= k <= v.experts_n:
                problems.append("experts.k must lie in [1, experts.n]")
            if v.experts_every < 1:
                problems.append("experts.every must be >= 1")
            if v.experts_capacity_factor < 0:
                problems.append("experts.capacity_factor must be >= 0")
            if v.experts_every > 1 and v.share_scheme != "none":
                problems.append("layer sharing needs every layer alike (experts.every = 1)")
        if arch == "pkm":
            if v.pkm_d_key % 2:
                problems.append("pkm.d_key must be even")
            if v.pkm_knn < 1 or v.pkm_knn > v.pkm_n_keys_half ** 2:
                problems.append("pkm.knn must lie in [1, n_keys_half^2]")
            if v.pkm_n_values and v.pkm_n_values != v.pkm_n_keys_half ** 2:
                problems.append("pkm.n_values must equal n_keys_half^2 (one value per product slot)")
            if self.n_dec_layers < 1:
                problems.append("pkm needs at least one decoder layer")
        if arch in ("lightweight-conv", "dynamic-conv"):
            if v.conv_width < 1:
                problems.append("conv.width must be >= 1")
            if v.conv_groups < 1 or self.d_model % v.conv_groups:
                problems.append("d_model must be divisible by conv.groups")
        if arch == "funnel":
            if v.funnel_blocks < 1 or v.funnel_layers_per_block < 1:
                problems.append("funnel.blocks and funnel.layers_per_block must be >= 1")
            elif v.funnel_blocks * v.funnel_layers_per_block != self.n_enc_layers:
                problems.append("funnel.blocks * funnel.layers_per_block must equal n_enc_layers")
            if self.max_src_len < 2 ** (v.funnel_blocks - 1):
                problems.append("source length too short for the funnel pooling")
        if arch == "universal":
            if v.ut_max_steps < 1:
                problems.append("ut.max_steps must be >= 1")
            if not 0 < v.ut_threshold <= 1:
                problems.append("ut.threshold must lie in (0, 1]")
            if v.share_scheme != "none":
                problems.append("universal transformer already shares its block")
            if self.d_model % 2:
                problems.append("universal transformer step signal needs an even d_model")
        if arch == "synthesizer" and v.synth_kind == "factorized" and v.synth_factor_k < 1:
            problems.append("synth.factor_k must be >= 1")
        if arch == "transparent" and self.n_enc_layers < 1:
            problems.append("transparent attention needs encoder layers")
        if problems:
            raise ConfigError("; ".join(problems))
        return self


def parse_ints(text):
    text = text.strip()
    if not text:
        return []
    try:
        return [int(p) for p in text.split(",")]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def spec_key(field_name):
    """``position_max_distance`` -> ``position.max_distance``."""
    head, _, tail = field_name.partition("_")
    return f"{head}.{tail}"


_VARIANT_FIELDS = {spec_key(f.name): f for f in fields(VariantSpec)}
_MODEL_FIELDS = {f"model.{f.name}": f for f in fields(ModelConfig) if f.name != "variant"}


def known_keys():
    return sorted(_MODEL_FIELDS) + sorted(_VARIANT_FIELDS)


def _coerce(key, f, raw, line=None):
    default = f.default
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ParseError(f"bad value {raw!r} for {key}", line) from None


def from_mapping(pairs, base=None):
    """Build a ModelConfig from ``{spec key: value}`` (values may be strings)."""
    base = base or ModelConfig()
    model_kw, variant_kw = {}, {}
    for key, value in pairs.items():
        line = None
        if isinstance(value, tuple):
            value, line = value
        if key in _MODEL_FIELDS:
            f = _MODEL_FIELDS[key]
            model_kw[f.name] = _coerce(key, f, value, line) if isinstance(value, str) else value
        elif key in _VARIANT_FIELDS:
            f = _VARIANT_FIELDS[key]
            variant_kw[f.name] = _coerce(key, f, value, line) if isinstance(value, str) else value
        else:
            raise ParseError(f"unknown key {key!r}", line)
    variant = replace(base.variant, **variant_kw)
    return replace(base, variant=variant, **model_kw)


def parse_spec(text, base=None):
    pairs = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", n)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ParseError(f"duplicate key {key!r}", n)
        pairs[key] = (value, n)
    return from_mapping(pairs, base)


def load_spec(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read(), base)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def format_spec(config, only_changed=True, header=None):
    """Render a config as spec text; defaults are omitted unless requested."""
    ref = ModelConfig()
    lines = [f"# {h}" for h in (header or "").splitlines() if h]
    for key, f in _MODEL_FIELDS.items():
        value = getattr(config, f.name)
        if not only_changed or value != getattr(ref, f.name):
            lines.append(f"{key} = {_fmt(value)}")
    for key, f in _VARIANT_FIELDS.items():
        value = getattr(config.variant, f.name)
        if not only_changed or value != getattr(ref.variant, f.name):
            lines.append(f"{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def as_dict(config):
    d = dataclasses.asdict(config)
    d["variant"] = dataclasses.asdict(config.variant)
    return d
