import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from workbench import ConfigError, ModelConfig, build_params
from workbench import accounting
from workbench.accounting import count_params, depth_width_presets, estimate_flops, forward_flops
from workbench.config import ARCH_KINDS
from workbench.presets import TABLE_PRESETS, TINY_VARIANTS, UNSUPPORTED

POSITIONS = ["sinusoidal", "learned", "relative-bias-shared", "relative-bias", "relative-representation"]
NORMS = ["layernorm", "rmsnorm", "rezero", "rezero+layernorm", "rezero+rmsnorm", "fixup"]
TYINGS = ["tie-all", "tie-enc-dec-input", "tie-dec-input-output", "untied"]
SHARES = ["none", "block-all", "encoder-only", "decoder-only"]


def random_config(rng, arch):
    """A valid small config mixing a random choice on every variant axis."""
    heads = int(rng.choice([1, 2]))
    d_kv = int(rng.choice([2, 4]))
    d_model = int(rng.choice([8, 12]))
    V = int(rng.integers(9, 15))
    L_enc, L_dec = int(rng.integers(0, 3)), int(rng.integers(1, 3))
    ch = {
        "position.kind": str(rng.choice(POSITIONS)),
        "position.value_offsets": bool(rng.integers(2)),
        "position.cross_bias": bool(rng.integers(2)),
        "norm.kind": str(rng.choice(NORMS)),
        "embed.tying": str(rng.choice(TYINGS)),
        "share.scheme": str(rng.choice(SHARES)),
        "arch.kind": arch,
    }
    ffn = rng.integers(3)
    if ffn == 1 and arch not in ("moe", "switch"):
        ch["ffn.glu_kind"] = str(rng.choice(["glu", "reglu", "geglu", "swiglu", "liglu"]))
    elif ffn == 2:
        ch["ffn.activation"] = str(rng.choice(["gelu", "swish", "elu", "selu", "sigmoid", "softplus"]))
    emb = rng.integers(4)
    if emb == 1:
        ch.update({"embed.factorized": True, "embed.d_inner": 4})
    elif emb == 2:
        ch["embed.adaptive_clusters"] = f"4,{V - 7},3"
    sm = rng.integers(3)
    if sm == 1 and emb != 1 and emb != 2:
        ch.update({"softmax.kind": "adaptive", "softmax.clusters": f"5,{V - 5}",
                   "softmax.project": bool(rng.integers(2))})
    elif sm == 2:
        ch.update({"softmax.kind": "mos", "softmax.K": int(rng.integers(1, 4))})
    if arch in ("moe", "switch"):
        ch.update({"experts.n": int(rng.integers(1, 4)), "experts.k": 1, "experts.d_ff": 6,
                   "experts.every": 1})
    if arch == "pkm":
        ch.update({"pkm.n_keys_half": 3, "pkm.knn": 4, "pkm.d_key": 4, "pkm.heads": heads})
    if arch in ("lightweight-conv", "dynamic-conv"):
        ch.update({"conv.width": 3, "conv.groups": 2})
    if arch == "funnel":
        L_enc = 2
        ch.update({"funnel.blocks": 2, "funnel.layers_per_block": 1})
    if arch == "universal":
        ch.update({"share.scheme": "none", "ut.max_steps": 2})
    if arch == "synthesizer":
        ch.update({"synth.kind": str(rng.choice(["dense", "random", "factorized"])),
                   "synth.mix": str(rng.choice(["pure", "plus", "plus-alpha"])),
                   "synth.scope": str(rng.choice(["encoder", "decoder", "all"])), "synth.factor_k": 2})
    if arch == "transparent":
        L_enc = max(L_enc, 1)
    cfg = ModelConfig.tiny(n_enc_layers=L_enc, n_dec_layers=L_dec, d_model=d_model, d_kv=d_kv,
                           n_heads=heads, d_vocab=V, max_src_len=6, max_tgt_len=5)
    return cfg.with_variant(**ch)


def _configs(n=20, seed=2024):
    rng = np.random.default_rng(seed)
    return [random_config(rng, ARCH_KINDS[i % len(ARCH_KINDS)]) for i in range(n)]


@pytest.mark.parametrize("index", range(20))
def test_count_equals_instantiation(index):
    cfg = _configs()[index]
    cfg.validate()
    assert count_params(cfg).total_params == build_params(cfg, index).num_scalars()


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 2 ** 32 - 1), arch=st.sampled_from(ARCH_KINDS))
def test_count_equals_instantiation_property(seed, arch):
    cfg = random_config(np.random.default_rng(seed), arch)
    assert count_params(cfg).total_params == build_params(cfg, 0).num_scalars()


@pytest.mark.parametrize("name", sorted(TINY_VARIANTS))
def test_registry_counts(name):
    cfg = TINY_VARIANTS[name]
    assert count_params(cfg).total_params == build_params(cfg, 0).num_scalars()


def test_breakdown_sums_to_total():
    for cfg in _configs():
        rep = count_params(cfg)
        assert rep.total_params == sum(rep.breakdown.values())


def test_baseline_total():
    assert round(count_params(ModelConfig.baseline()).total_params / 1e6) == 223


def test_zero_layer_tie_all():
    cfg = ModelConfig.baseline(n_enc_layers=0, n_dec_layers=0)
    assert count_params(cfg).total_params == 32000 * 768


def test_depth_presets_within_one_percent():
    presets = depth_width_presets()
    base = count_params(presets[0]).total_params
    assert len(presets) == 5
    for cfg in presets[1:]:
        assert abs(count_params(cfg).total_params - base) / base < 0.01


def test_unsupported_combination():
    cfg = ModelConfig.tiny().with_variant(**{"arch.kind": "moe", "experts.every": 2,
                                             "share.scheme": "block-all"})
    with pytest.raises(ConfigError):
        count_params(cfg)


def test_unsupported_rows_marked():
    assert TABLE_PRESETS["Evolved Transformer"] == UNSUPPORTED
    assert TABLE_PRESETS["Weighted Transformer"] == UNSUPPORTED


class TestFlops:
    def test_matmul_convention(self):
        assert accounting._mm(1, 5, 7) == 2 * 5 * 7

    def test_zero_layer_output(self):
        cfg = ModelConfig.tiny(n_enc_layers=0, n_dec_layers=0)
        rep = estimate_flops(cfg, T=4, U=3)
        assert rep.flops_breakdown["output"] == 2 * 3 * cfg.d_model * cfg.d_vocab

    @pytest.mark.parametrize("field,lo,hi", [("T", 64, 128), ("U", 32, 64)])
    def test_monotone_in_lengths(self, field, lo, hi):
        cfg = ModelConfig.baseline()
        a = forward_flops(cfg, **{field: lo})
        b = forward_flops(cfg, **{field: hi})
        assert b > a

    @pytest.mark.parametrize("field", ["d_model", "d_ff"])
    def test_monotone_in_widths(self, field):
        small = ModelConfig.tiny(d_model=8, d_ff=16)
        big = small.replace(**{field: 2 * getattr(small, field)})
        assert forward_flops(big, 16, 16) > forward_flops(small, 16, 16)

    def test_funnel_encoder_shrinks(self):
        base = ModelConfig.baseline()
        funnel = TABLE_PRESETS["Funnel Transformer"]
        fb, ff = estimate_flops(base).flops_breakdown, estimate_flops(funnel).flops_breakdown
        assert ff["encoder"] < fb["encoder"]
        assert forward_flops(funnel) < forward_flops(base)

    def test_funnel_layer_scaling(self):
        # with a single pooling block boundary the post-pool layers see T/2 tokens
        cfg = ModelConfig.baseline().with_variant(**{"arch.kind": "funnel"})
        per_len = accounting._ffn_flops(cfg, 512, 0) / accounting._ffn_flops(cfg, 128, 0)
        assert per_len == 4

    def test_factorized_fewer_embedding_flops(self):
        base = estimate_flops(ModelConfig.baseline()).flops_breakdown
        fact = estimate_flops(TABLE_PRESETS["Factorized Embedding"]).flops_breakdown
        assert fact["embeddings"] < base["embeddings"]
        assert fact["output"] == base["output"]  # output table stays untied and full

    def test_factorized_tied_output_cheaper(self):
        base = ModelConfig.baseline()
        fact = base.with_variant(**{"embed.factorized": True, "embed.d_inner": 128})
        assert estimate_flops(fact).flops_breakdown["output"] < estimate_flops(base).flops_breakdown["output"]

    def test_mos_costs_more(self):
        base = ModelConfig.baseline()
        mos = TABLE_PRESETS["Mixture of softmaxes"]
        assert forward_flops(mos) > forward_flops(base)

    def test_switch_activated_flops(self):
        base, switch = ModelConfig.baseline(), TABLE_PRESETS["Switch Transformer"]
        assert count_params(switch).total_params >= 4.9 * count_params(base).total_params
        assert abs(forward_flops(switch) / forward_flops(base) - 1) < 0.10

    def test_train_step_convention(self):
        rep = estimate_flops(ModelConfig.baseline(), T=512, U=128, batch_tokens=640)
        assert rep.flops_train_step == 3 * sum(rep.flops_breakdown.values())
