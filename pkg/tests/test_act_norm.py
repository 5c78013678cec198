import mpmath
import numpy as np
import pytest

from workbench import Batch, ConfigError, ModelConfig, Model, build_params
from workbench.act_norm import (activation, fixup_init, glu_ffn, rezero_residual, rms_norm)
from workbench.accounting import count_params
from workbench.model import subblock_layout
from workbench.numerics import Tensor, grad_check, log_softmax, sum as tsum

from conftest import store_with

mpmath.mp.dps = 40
LAM, ALPHA = mpmath.mpf("1.0507009873554804934193349852946"), mpmath.mpf("1.6732632423543772848170429916717")
REFERENCE = {
    "gelu": lambda x: x * (1 + mpmath.erf(x / mpmath.sqrt(2))) / 2,
    "swish": lambda x: x / (1 + mpmath.e ** (-x)),
    "elu": lambda x: x if x > 0 else mpmath.e ** x - 1,
    "selu": lambda x: LAM * (x if x > 0 else ALPHA * (mpmath.e ** x - 1)),
    "sigmoid": lambda x: 1 / (1 + mpmath.e ** (-x)),
    "softplus": lambda x: mpmath.log(1 + mpmath.e ** x),
}


class TestActivations:
    def test_values_at_zero(self):
        want = {"relu": 0, "gelu": 0, "swish": 0, "elu": 0, "selu": 0, "sigmoid": 0.5,
                "softplus": np.log(2)}
        for kind, v in want.items():
            assert activation(kind, Tensor([0.0])).data[0] == pytest.approx(v, abs=1e-15)

    def test_relu(self):
        assert list(activation("relu", Tensor([-3.0, 3.0])).data) == [0, 3]

    @pytest.mark.parametrize("kind", sorted(REFERENCE))
    def test_high_precision(self, kind):
        xs = [-2.0, -0.5, 0.5, 2.0]
        got = activation(kind, Tensor(xs)).data
        want = [float(REFERENCE[kind](mpmath.mpf(x))) for x in xs]
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-10)

    @pytest.mark.parametrize("kind", ["relu", "gelu", "swish", "elu", "selu", "sigmoid", "softplus"])
    def test_derivative_at_random_points(self, kind, rng):
        x = rng.uniform(-4, 4, size=100)
        x = np.where(np.abs(x) < 1e-3, 0.5, x)
        p = store_with(x=x)
        assert grad_check(lambda s: tsum(activation(kind, s["x"])), p) < 1e-6

    def test_unknown(self):
        with pytest.raises(ConfigError):
            activation("mish", Tensor([0.0]))


def _glu_params(rng, d=3, f=4):
    return store_with(**{"g.wg": rng.normal(size=(d, f)), "g.bg": rng.normal(size=f),
                         "g.wl": rng.normal(size=(d, f)), "g.bl": rng.normal(size=f),
                         "g.wo": rng.normal(size=(f, d)), "g.bo": np.zeros(d)})


class TestGlu:
    def test_glu_zero_gate_halves(self, rng):
        p = _glu_params(rng)
        p["g.wg"].data[...] = 0
        p["g.bg"].data[...] = 0
        s = rng.normal(size=(2, 3))
        lin = s @ p["g.wl"].data + p["g.bl"].data
        np.testing.assert_allclose(glu_ffn("glu", Tensor(s), p, "g").data, 0.5 * lin @ p["g.wo"].data,
                                   atol=1e-15)

    def test_reglu_negative_gate(self, rng):
        p = _glu_params(rng)
        p["g.wg"].data[...] = 0
        p["g.bg"].data[...] = -1.0
        assert np.array_equal(glu_ffn("reglu", Tensor(rng.normal(size=(2, 3))), p, "g").data, np.zeros((2, 3)))

    def test_liglu_direct_loop(self, rng):
        p = _glu_params(rng)
        P = {n: p[n].data for n in p.names()}
        s = rng.normal(size=(2, 3))
        want = np.zeros((2, 3))
        for t in range(2):
            for o in range(3):
                acc = 0.0
                for j in range(4):
                    a = sum(s[t, i] * P["g.wg"][i, j] for i in range(3)) + P["g.bg"][j]
                    b = sum(s[t, i] * P["g.wl"][i, j] for i in range(3)) + P["g.bl"][j]
                    acc += a * b * P["g.wo"][j, o]
                want[t, o] = acc
        np.testing.assert_allclose(glu_ffn("liglu", Tensor(s), p, "g").data, want, atol=1e-13)

    def test_unknown(self, rng):
        with pytest.raises(ConfigError):
            glu_ffn("xglu", Tensor(np.zeros((1, 3))), _glu_params(rng), "g")

    @pytest.mark.parametrize("kind", ["glu", "reglu", "geglu", "swiglu", "liglu"])
    def test_param_parity(self, kind):
        base = ModelConfig.baseline()
        glu = base.with_variant(**{"ffn.glu_kind": kind})
        ffn = lambda c: sum(v for k, v in count_params(c).breakdown.items())  # noqa: E731
        rel = abs(ffn(glu) - ffn(base)) / ffn(base)
        assert rel < 0.01


class TestRmsNorm:
    def test_direct(self):
        out = rms_norm(Tensor([3.0, 4.0]), np.ones(2), eps=0).data
        np.testing.assert_allclose(out, [3 / np.sqrt(12.5), 4 / np.sqrt(12.5)], rtol=0, atol=1e-15)
        np.testing.assert_allclose(rms_norm(Tensor([3.0, 4.0]), np.ones(2)).data,
                                   [0.848528137423857, 1.131370849898476], atol=1e-7)

    def test_unit_rms_fixed_point(self):
        h = np.array([1.0, -1.0, 1.0, -1.0])
        np.testing.assert_allclose(rms_norm(Tensor(h), np.ones(4), eps=1e-9).data, h, rtol=0, atol=1e-9)
        # at the model default the only deviation is the epsilon shrink 1/sqrt(1 + eps)
        np.testing.assert_allclose(rms_norm(Tensor(h), np.ones(4)).data, h / np.sqrt(1 + 1e-6),
                                   rtol=0, atol=1e-15)

    def test_output_rms(self, rng):
        out = rms_norm(Tensor(rng.normal(size=(5, 16)) * 7), np.ones(16)).data
        np.testing.assert_allclose(np.sqrt((out ** 2).mean(-1)), 1, atol=1e-6)

    @pytest.mark.parametrize("c", [-3.0, 0.5, 20.0])
    def test_scale_equivariance(self, c, rng):
        h = rng.normal(size=(3, 8))
        a = rms_norm(Tensor(c * h), np.ones(8), eps=0).data
        b = np.sign(c) * rms_norm(Tensor(h), np.ones(8), eps=0).data
        np.testing.assert_allclose(a, b, atol=1e-9)


def _embedding_only_loss(cfg, P, batch):
    E = P["embed.table"].data
    logp = log_softmax(Tensor(E[batch.decoder_input()] @ E.T)).data
    return -np.take_along_axis(logp, batch.y[..., None], -1).mean()


class TestResidualVariants:
    def test_rezero_formula(self):
        x, f = np.array([1.0, 2.0]), np.array([5.0, -5.0])
        assert np.array_equal(rezero_residual(Tensor(x), Tensor(f), 0.0).data, x)
        assert np.array_equal(rezero_residual(Tensor(x), Tensor(f), 1.0).data, x + f)

    def test_rezero_model_identity_at_init(self, rng):
        cfg = ModelConfig.tiny().with_variant(**{"norm.kind": "rezero", "position.kind": "none"})
        P = build_params(cfg, 0)
        model = Model(cfg, P)
        x = rng.integers(1, 11, (2, 5))
        assert np.array_equal(model.encode(x).memories[0].data, P["embed.table"].data[x])
        batch = Batch(x, rng.integers(1, 11, (2, 5)))
        assert model.forward(batch).loss.item() == pytest.approx(_embedding_only_loss(cfg, P, batch), abs=1e-14)

    def test_rezero_alpha_moves_after_one_step(self, rng):
        cfg = ModelConfig.tiny().with_variant(**{"norm.kind": "rezero"})
        P = build_params(cfg, 0)
        batch = Batch(rng.integers(1, 11, (2, 5)), rng.integers(1, 11, (2, 5)))
        Model(cfg, P).forward(batch).loss.backward()
        g = P["dec.1.ffn.alpha"].grad
        assert g is not None and g[0] != 0
        assert (P["dec.1.ffn.alpha"].data - 0.1 * g)[0] != 0

    def test_fixup_branches_zero_at_init(self, rng):
        cfg = ModelConfig.tiny().with_variant(**{"norm.kind": "fixup", "position.kind": "none"})
        P = build_params(cfg, 0)
        model = Model(cfg, P)
        x = rng.integers(1, 11, (2, 5))
        assert np.array_equal(model.encode(x).memories[0].data, P["embed.table"].data[x])
        batch = Batch(x, rng.integers(1, 11, (2, 5)))
        assert model.forward(batch).loss.item() == pytest.approx(_embedding_only_loss(cfg, P, batch), abs=1e-14)

    def test_fixup_directive_hand_count(self):
        cfg = ModelConfig.tiny().with_variant(**{"norm.kind": "fixup"})
        d = fixup_init(cfg)
        # 2 enc layers x 2 sub-blocks + 2 dec layers x 3 sub-blocks = 10 sub-blocks
        assert sum(x.action == "scalar" for x in d) == 20
        # enc layer: q,k,v,w1 scaled / o,w2 zeroed; dec layer: 2x(q,k,v) + w1 / 2x o + w2
        assert sum(x.action == "scale" for x in d) == 2 * 4 + 2 * 7
        assert sum(x.action == "zero" for x in d) == 2 * 2 + 2 * 3
        scales = {x.value for x in d if x.action == "scale"}
        assert len(scales) == 1 and scales.pop() == pytest.approx(10 ** -0.5, rel=1e-15)

    def test_fixup_baseline_factor(self):
        cfg = ModelConfig.baseline().with_variant(**{"norm.kind": "fixup"})
        assert len(subblock_layout(cfg)) == 60
        scales = {x.value for x in fixup_init(cfg) if x.action == "scale"}
        assert len(scales) == 1 and scales.pop() == pytest.approx(60 ** -0.5, rel=1e-15)

    def test_fixup_scaled_init_std(self):
        cfg = ModelConfig.tiny(d_model=64, d_kv=32, d_ff=128).with_variant(**{"norm.kind": "fixup"})
        P = build_params(cfg, 0)
        w = P["enc.0.ffn.w1"].data
        assert 0.8 < w.std() / (64 ** -0.5 * 10 ** -0.5) < 1.2
        assert not P["enc.0.ffn.w2"].data.any()
