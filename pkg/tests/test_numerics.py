import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from workbench.errors import ConfigError, NumericError
from workbench.numerics import (UNARY, Init, Rng, Tensor, add, concat, div, grad_check, index,
                                init_param, log_softmax, logsumexp, matmul, mean, mul, neg, reshape,
                                scatter_add, softmax, sub, sum, transpose, unary)

from conftest import store_with


def naive_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


class TestMatmul:
    def test_identity(self):
        out = matmul(np.eye(2), np.array([[1.0, 2], [3, 4]]))
        assert np.array_equal(out.data, [[1, 2], [3, 4]])

    def test_projector(self):
        out = matmul(np.array([[1.0, 0], [0, 0]]), np.array([[5.0], [7]]))
        assert np.array_equal(out.data, [[5], [0]])

    def test_triple_loop_oracle(self, rng):
        # small integers keep every partial sum exact, so equality is exact
        a = rng.integers(-9, 10, size=(3, 4)).astype(float)
        b = rng.integers(-9, 10, size=(4, 2)).astype(float)
        assert np.array_equal(matmul(a, b).data, naive_matmul(a, b))

    def test_random_floats_match_loop(self, rng):
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        np.testing.assert_allclose(matmul(a, b).data, naive_matmul(a, b), rtol=0, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestSoftmax:
    def test_symmetric(self):
        assert np.array_equal(softmax(np.zeros(2)).data, [0.5, 0.5])

    def test_stable_at_large_logits(self):
        out = softmax(np.array([1000.0, 0.0])).data
        assert out[0] == 1.0 and 0 <= out[1] < 1e-300

    def test_matches_extended_precision(self):
        mpmath.mp.dps = 40
        xs = [1, 2, 3]
        z = mpmath.fsum(mpmath.e ** x for x in xs)
        want = [float(mpmath.e ** x / z) for x in xs]
        np.testing.assert_allclose(softmax(np.array(xs, float)).data, want, rtol=0, atol=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=6),
                      elements=st.floats(-1e3, 1e3)))
    def test_rows_sum_to_one(self, x):
        y = softmax(x).data
        assert (y >= 0).all()
        assert np.abs(y.sum(axis=-1) - 1).max() <= 1e-12

    def test_mask_gives_exact_zero(self):
        y = softmax(np.array([[1.0, 2.0, 3.0]]), mask=np.array([[True, False, True]])).data
        assert y[0, 1] == 0.0 and abs(y.sum() - 1) < 1e-15

    def test_non_finite_input(self):
        with pytest.raises(NumericError):
            softmax(np.array([np.nan, 0.0]))


class TestInit:
    def test_zeros_and_ones(self):
        assert np.array_equal(init_param(Rng(0), (3,), Init.zeros()), [0, 0, 0])
        assert np.array_equal(init_param(Rng(0), (2,), Init.ones()), [1, 1])

    def test_constant(self):
        assert np.array_equal(init_param(Rng(0), (2,), Init.constant(2.5)), [2.5, 2.5])

    def test_scaled_normal_std(self):
        x = init_param(Rng(3), (100, 1000), Init.normal(fan_in=1024), name="w")
        assert 0.028 <= x.std() <= 0.034

    def test_deterministic(self):
        a = init_param(Rng(7), (4, 5), Init.normal(), name="w")
        b = init_param(Rng(7), (4, 5), Init.normal(), name="w")
        assert np.array_equal(a, b)
        assert not np.array_equal(a, init_param(Rng(8), (4, 5), Init.normal(), name="w"))

    def test_unknown_scheme(self):
        with pytest.raises(ConfigError):
            init_param(Rng(0), (2,), Init("laplace"))

    def test_rng_stream_reproducible(self):
        r1, r2 = Rng(5), Rng(5)
        assert np.array_equal(r1.normal((3,)), r2.normal((3,)))
        assert np.array_equal(r1.integers(0, 100, (4,)), r2.integers(0, 100, (4,)))


class TestGradCheck:
    def test_square(self):
        p = store_with(w=[3.0])
        p.zero_grad()
        loss = sum(mul(p["w"], p["w"]))
        loss.backward()
        assert p["w"].grad[0] == 6.0
        assert grad_check(lambda s: sum(mul(s["w"], s["w"])), p) < 1e-9

    def test_constant_function(self):
        p = store_with(w=[0.3, -1.2, 2.0])
        assert grad_check(lambda s: sum(softmax(s["w"])), p) < 1e-6

    def test_eps_range(self):
        with pytest.raises(ConfigError):
            grad_check(lambda s: sum(s["w"]), store_with(w=[1.0]), eps=1e-2)

    def test_non_finite_loss(self):
        with pytest.raises(NumericError):
            grad_check(lambda s: sum(unary("log", s["w"])), store_with(w=[-1.0]))

    def test_broken_backward_detected(self, monkeypatch):
        p = store_with(w=[0.4, -0.7])
        f = lambda s: sum(unary("tanh", s["w"]))  # noqa: E731
        assert grad_check(f, p) < 1e-6
        monkeypatch.setitem(UNARY, "tanh", (np.tanh, lambda x, y: 1.0 - 0.5 * y * y))
        assert grad_check(f, p) > 1e-4


# -- per-op vector-Jacobian products against central differences --------------------

def _probe(rng, shapes, positive=()):
    arrays = {}
    for name, shape in shapes.items():
        a = rng.normal(size=shape)
        arrays[name] = np.abs(a) + 0.5 if name in positive else a
    return store_with(**arrays)


def _weighted(t, rng):
    # a random linear read-out makes every output coordinate matter
    w = np.random.default_rng(99).normal(size=t.shape)
    return sum(mul(t, w))


UNARY_DOMAINS = {"log": "positive", "sqrt": "positive", "reciprocal": "positive"}


@pytest.mark.parametrize("kind", sorted(UNARY))
def test_unary_vjp(kind, rng):
    pos = ("x",) if kind in UNARY_DOMAINS else ()
    x = rng.normal(size=(6,))
    if kind == "relu":
        x = np.where(np.abs(x) < 0.05, 0.3, x)  # stay away from the kink
    p = _probe(rng, {"x": (6,)}, pos) if pos else store_with(x=x)
    assert grad_check(lambda s: _weighted(unary(kind, s["x"]), rng), p) < 1e-6


BINARY_CASES = {
    "add": (lambda s: add(s["a"], s["b"]), {"a": (3, 4), "b": (4,)}),
    "sub": (lambda s: sub(s["a"], s["b"]), {"a": (3, 1), "b": (3, 4)}),
    "mul": (lambda s: mul(s["a"], s["b"]), {"a": (2, 3, 4), "b": (1, 4)}),
    "div": (lambda s: div(s["a"], s["b"]), {"a": (3, 4), "b": (3, 4)}),
    "neg": (lambda s: neg(s["a"]), {"a": (5,)}),
    "matmul": (lambda s: matmul(s["a"], s["b"]), {"a": (3, 4), "b": (4, 2)}),
    "matmul-batched": (lambda s: matmul(s["a"], s["b"]), {"a": (2, 3, 4), "b": (4, 2)}),
    "softmax": (lambda s: softmax(s["a"], axis=-1), {"a": (3, 5)}),
    "softmax-masked": (lambda s: softmax(s["a"], mask=np.array([True, False, True, True])),
                       {"a": (2, 4)}),
    "log_softmax": (lambda s: log_softmax(s["a"]), {"a": (3, 5)}),
    "logsumexp": (lambda s: logsumexp(s["a"], axis=0), {"a": (3, 5)}),
    "reshape": (lambda s: reshape(s["a"], (6, 2)), {"a": (3, 4)}),
    "transpose": (lambda s: transpose(s["a"], (2, 0, 1)), {"a": (2, 3, 4)}),
    "concat": (lambda s: concat([s["a"], s["b"]], axis=1), {"a": (2, 3), "b": (2, 2)}),
    "index": (lambda s: index(s["a"], np.array([0, 2, 2, 1])), {"a": (3, 4)}),
    "scatter_add": (lambda s: scatter_add(s["a"], np.array([1, 1, 3]), 5), {"a": (3, 2)}),
    "sum": (lambda s: sum(s["a"], axis=1), {"a": (3, 4)}),
    "mean": (lambda s: mean(s["a"], axis=0, keepdims=True), {"a": (3, 4)}),
}


@pytest.mark.parametrize("name", sorted(BINARY_CASES))
def test_op_vjp(name, rng):
    fn, shapes = BINARY_CASES[name]
    p = _probe(rng, shapes, positive=("b",) if name == "div" else ())
    assert grad_check(lambda s: _weighted(fn(s), rng), p) < 1e-6


def test_backward_visits_shared_node_once():
    p = store_with(w=[2.0])
    y = mul(p["w"], p["w"])      # y = w^2
    z = add(y, y)                # z = 2 w^2, y reused
    sum(z).backward()
    assert p["w"].grad[0] == 8.0


def test_kernels_are_pure(rng):
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
    assert np.array_equal(matmul(a, b).data, matmul(a, b).data)
    assert np.array_equal(softmax(a).data, softmax(a).data)


def test_tensor_item_and_operators():
    t = Tensor([2.0])
    assert (t * 3 + 1 - t).item() == 5.0
