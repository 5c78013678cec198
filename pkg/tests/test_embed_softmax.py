import numpy as np
import pytest

from workbench import Batch, ConfigError, DataError, ModelConfig, Model, build_params
from workbench.accounting import count_params
from workbench.embeddings import (AdaptiveInput, AdaptiveSoftmax, MixtureOfSoftmaxes, build_tables,
                                  apply_sharing)
from workbench.numerics import Tensor, sum as tsum
from workbench.params import ParamStore


def _softmax(z):
    e = np.exp(z - z.max(-1, keepdims=True))
    return e / e.sum(-1, keepdims=True)


def _log_softmax(z):
    z = z - z.max(-1, keepdims=True)
    return z - np.log(np.exp(z).sum(-1, keepdims=True))


class TestTying:
    def test_tie_all_single_object(self):
        roles = build_tables(ModelConfig.tiny())
        assert roles["enc"] is roles["dec"] is roles["out"]
        P = build_params(ModelConfig.tiny(), 0)
        assert [n for n in P.names() if n.startswith("embed")] == ["embed.table"]

    @pytest.mark.parametrize("scheme,shared", [
        ("tie-enc-dec-input", [("enc", "dec")]),
        ("tie-dec-input-output", [("dec", "out")]),
        ("untied", []),
    ])
    def test_groups(self, scheme, shared):
        roles = build_tables(ModelConfig.tiny().with_variant(**{"embed.tying": scheme}))
        pairs = [("enc", "dec"), ("enc", "out"), ("dec", "out")]
        for a, b in pairs:
            assert (roles[a] is roles[b]) == ((a, b) in shared)

    def test_untied_delta(self):
        base = ModelConfig.baseline()
        untied = base.with_variant(**{"embed.tying": "untied"})
        delta = count_params(untied).total_params - count_params(base).total_params
        assert delta == 2 * 32000 * 768

    def test_factorized_input_params(self):
        cfg = ModelConfig.baseline(n_enc_layers=0, n_dec_layers=0).with_variant(
            **{"embed.factorized": True, "embed.tying": "tie-enc-dec-input"})
        P = build_params(cfg, 0)
        assert P["embed.A"].size + P["embed.B"].size == 32000 * 128 + 128 * 768
        assert P["logits.table"].shape == (32000, 768)

    def test_tied_step_moves_all_aliases(self, rng):
        cfg = ModelConfig.tiny()
        P = build_params(cfg, 0)
        batch = Batch(rng.integers(1, 11, (2, 5)), rng.integers(1, 11, (2, 5)))
        Model(cfg, P).forward(batch).loss.backward()
        roles = build_tables(cfg)
        assert roles["enc"].prefix == roles["out"].prefix == "embed"
        assert len([t for n, t in P.named_tensors() if n == "embed.table"]) == 1


class TestAdaptiveInput:
    def test_single_cluster_equals_plain(self, rng):
        cfg = ModelConfig.tiny()
        table = AdaptiveInput("ai", cfg, [11], [8])
        store = ParamStore(0)
        table.declare(store)
        store["ai.c0.proj"].data[...] = np.eye(8)
        ids = rng.integers(0, 11, (2, 4))
        assert np.array_equal(table.lookup(store, ids).data, store["ai.c0.table"].data[ids])

    def test_gradient_locality(self):
        cfg = ModelConfig.tiny()
        table = AdaptiveInput("ai", cfg, [4, 4, 3], [8, 4, 2])
        store = ParamStore(0)
        table.declare(store)
        out = table.lookup(store, np.array([[9, 10]]))   # both in cluster 2
        tsum(out).backward()
        for c in (0, 1):
            for part in ("table", "proj"):
                g = store[f"ai.c{c}.{part}"].grad
                assert g is None or not g.any()
        assert store["ai.c2.table"].grad.any() and store["ai.c2.proj"].grad.any()

    def test_full_size_cluster_count(self):
        sizes, dims, d = [2500, 6000, 23500], [768, 192, 48], 768
        cfg = ModelConfig.baseline()
        table = AdaptiveInput("ai", cfg, sizes, dims)
        store = ParamStore(0)
        table.declare(store)
        assert store.num_scalars() == sum(s * k + k * d for s, k in zip(sizes, dims))

    def test_bad_ids(self):
        cfg = ModelConfig.tiny()
        table = AdaptiveInput("ai", cfg, [4, 4, 3], [8, 4, 2])
        store = ParamStore(0)
        table.declare(store)
        with pytest.raises(DataError):
            table.lookup(store, np.array([[11]]))

    def test_sizes_must_cover_vocab(self):
        with pytest.raises(ConfigError):
            AdaptiveInput("ai", ModelConfig.tiny(), [4, 4], [8, 4])


class TestSharing:
    def test_shared_gradient_is_sum(self, rng):
        base = ModelConfig.tiny()
        shared = base.with_variant(**{"share.scheme": "block-all"})
        Pu, Ps = build_params(base, 0), build_params(shared, 0)
        for n in Ps.names():
            Pu[n].data[...] = Ps[n].data
        batch = Batch(rng.integers(1, 11, (2, 5)), rng.integers(1, 11, (2, 5)))
        Model(base, Pu).forward(batch).loss.backward()
        Model(shared, Ps).forward(batch).loss.backward()
        for name in ("enc.0.self.q", "enc.0.ffn.w1", "dec.0.cross.v", "dec.0.ffn.ln.g"):
            other = name.replace(".0.", ".1.")
            np.testing.assert_allclose(Ps[name].grad, Pu[name].grad + Pu[other].grad, atol=1e-14)
        assert Ps["enc.1.self.q"] is Ps["enc.0.self.q"]

    @pytest.mark.parametrize("scheme,stacks", [("encoder-only", ["enc"]), ("decoder-only", ["dec"])])
    def test_scope(self, scheme, stacks):
        P = build_params(ModelConfig.tiny().with_variant(**{"share.scheme": scheme}), 0)
        for stack in ("enc", "dec"):
            same = P[f"{stack}.1.ffn.w1"] is P[f"{stack}.0.ffn.w1"]
            assert same == (stack in stacks)

    def test_single_layer_noop(self):
        cfg = ModelConfig.tiny(n_enc_layers=1, n_dec_layers=1)
        shared = cfg.with_variant(**{"share.scheme": "block-all"})
        assert count_params(cfg).total_params == count_params(shared).total_params
        assert build_params(shared, 0).num_scalars() == build_params(cfg, 0).num_scalars()

    def test_unknown_scheme(self):
        with pytest.raises(ConfigError):
            apply_sharing(ParamStore(0), "rows")


def _adaptive(rng, sizes, dims, project, d=6):
    cfg = ModelConfig.tiny(d_model=d, d_vocab=sum(sizes))
    table = AdaptiveSoftmax("as", cfg, sizes, dims, project)
    store = ParamStore(0)
    table.declare(store)
    for _, t in store.named_tensors():
        t.data[...] = rng.normal(size=t.shape)
    return cfg, table, store


class TestAdaptiveSoftmax:
    def test_single_cluster_is_full_softmax(self, rng):
        cfg, table, store = _adaptive(rng, [10], [6], True)
        h = rng.normal(size=(3, 6))
        want = _log_softmax(h @ store["as.head"].data)
        np.testing.assert_allclose(table.log_probs(store, Tensor(h)).data, want, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("project", [True, False])
    def test_normalised(self, rng, project):
        cfg, table, store = _adaptive(rng, [4, 3, 3], [6, 3, 2], project)
        lp = table.log_probs(store, Tensor(rng.normal(size=(5, 6)))).data
        assert np.abs(np.exp(lp).sum(-1) - 1).max() <= 1e-9

    @pytest.mark.parametrize("project", [True, False])
    def test_brute_force_two_stage(self, rng, project):
        cfg, table, store = _adaptive(rng, [6, 4], [6, 3], project)
        P = {n: store[n].data for n in store.names()}
        h = rng.normal(size=(4, 6))
        want = np.zeros((4, 10))
        for r in range(4):
            head = _softmax(h[r] @ P["as.head"])             # 6 words + 1 gate
            tail_in = h[r] @ P["as.c1.proj"] if project else h[r]
            tail = _softmax(tail_in @ P["as.c1.out"])
            for w in range(10):
                want[r, w] = np.log(head[w]) if w < 6 else np.log(head[6] * tail[w - 6])
        np.testing.assert_allclose(table.log_probs(store, Tensor(h)).data, want, rtol=0, atol=1e-12)

    def test_target_log_probs_agree(self, rng):
        cfg, table, store = _adaptive(rng, [4, 3, 3], [6, 3, 2], True)
        h = rng.normal(size=(2, 3, 6))
        y = rng.integers(0, 10, (2, 3))
        full = table.log_probs(store, Tensor(h)).data
        got = table.target_log_probs(store, Tensor(h), y).data
        np.testing.assert_allclose(got, np.take_along_axis(full, y[..., None], -1)[..., 0], atol=1e-13)

    def test_bad_clusters(self):
        with pytest.raises(ConfigError):
            AdaptiveSoftmax("as", ModelConfig.tiny(), [4, 4], [8, 4], True)


def _mos(rng, K, d=6, V=9):
    cfg = ModelConfig.tiny(d_model=d, d_vocab=V).with_variant(**{"softmax.kind": "mos", "softmax.K": K})
    store = ParamStore(0)
    table = build_tables(cfg)["out"]
    table.declare(store)
    mos = MixtureOfSoftmaxes("mos", cfg, table)
    mos.declare(store)
    for _, t in store.named_tensors():
        t.data[...] = rng.normal(size=t.shape)
    return mos, store


class TestMixtureOfSoftmaxes:
    def _components(self, store, h):
        P = {n: store[n].data for n in store.names()}
        G = P["embed.table"]
        prior = _softmax(h @ P["mos.prior"])
        comps = np.stack([_softmax(np.tanh(h @ P["mos.proj"][k] + P["mos.proj_b"][k]) @ G.T)
                          for k in range(P["mos.proj"].shape[0])])
        return prior, comps

    def test_k1_is_plain_softmax(self, rng):
        mos, store = _mos(rng, 1)
        h = rng.normal(size=(4, 6))
        _, comps = self._components(store, h)
        np.testing.assert_allclose(np.exp(mos.log_probs(store, Tensor(h)).data), comps[0],
                                   rtol=0, atol=1e-12)

    def test_direct_convex_combination(self, rng):
        mos, store = _mos(rng, 3)
        h = rng.normal(size=(4, 6))
        prior, comps = self._components(store, h)
        want = np.einsum("nk,knv->nv", prior, comps)
        got = np.exp(mos.log_probs(store, Tensor(h)).data)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)
        assert np.abs(got.sum(-1) - 1).max() <= 1e-9
        assert (got >= comps.min(0) - 1e-15).all() and (got <= comps.max(0) + 1e-15).all()

    def test_one_hot_mixture(self, rng):
        mos, store = _mos(rng, 3)
        store["mos.prior"].data[...] = 0
        h = rng.normal(size=(2, 6))
        # a huge constant logit on component 1 through a bias-like input column
        h[:, 0] = 1.0
        store["mos.prior"].data[0] = [0.0, 800.0, 0.0]
        _, comps = self._components(store, h)
        np.testing.assert_allclose(np.exp(mos.log_probs(store, Tensor(h)).data), comps[1], atol=1e-12)

    def test_k_must_be_positive(self):
        cfg = ModelConfig.tiny().with_variant(**{"softmax.kind": "mos", "softmax.K": 0})
        with pytest.raises(ConfigError):
            MixtureOfSoftmaxes("mos", cfg, None)
