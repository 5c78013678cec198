"""Float64 tensors, a reverse-mode tape and deterministic randomness.

Every model in the package is written against the small closed set of
operations defined here (matmul, add/sub/mul/div, registered elementwise
unaries, softmax/log-softmax, reshape/transpose, concat, indexing,
scatter-add and sum/mean reductions).  Each result is checked for
finiteness so that a bad configuration fails at the kernel that produced
the first inf/NaN instead of silently poisoning a loss.

Reductions use numpy's summation, whose order depends only on shapes, so a
kernel called twice on equal inputs returns bit-identical outputs.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigError, NumericError

__all__ = [
    "Tensor", "Rng", "Init", "as_tensor", "add", "sub", "mul", "div", "neg",
    "matmul", "unary", "softmax", "log_softmax", "logsumexp", "reshape",
    "transpose", "concat", "index", "scatter_add", "sum", "mean",
    "init_param", "grad_check", "grad_errors", "UNARY",
]


def _check_finite(data, op):
    if not np.isfinite(data).all():
        raise NumericError(f"non-finite result from {op}")


class Tensor:
    """A dense float64 array plus the tape node that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def item(self):
        if self.size != 1:
            raise ConfigError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf that
        requires a gradient.  Each node is visited once, in reverse
        topological order."""
        if grad is None:
            if self.size != 1:
                raise ConfigError("backward() without a seed needs a scalar")
            grad = np.ones_like(self.data)
        order = _topological(self)
        self.grad = np.asarray(grad, dtype=np.float64)
        for node in reversed(order):
            if node._backward is None:
                continue
            g = node.grad
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(pg, dtype=np.float64, copy=True)
                else:
                    parent.grad = parent.grad + pg
            # intermediate adjoints are not needed once propagated
            node.grad = None


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _node(data, parents, backward, op):
    _check_finite(data, op)
    out = Tensor(data, op=op)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- binary arithmetic ----------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), backward, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _node(a.data / b.data, (a, b), backward, "div")


def neg(a):
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a, b):
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ConfigError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ConfigError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ConfigError(f"matmul batch shapes incompatible: {a.shape} x {b.shape}") from exc

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (None if ga is None else _unbroadcast(ga, a.shape),
                None if gb is None else _unbroadcast(gb, b.shape))

    return _node(out, (a, b), backward, "matmul")


# -- elementwise unaries --------------------------------------------------
# Each entry: forward f(x) and derivative df(x, y) with y = f(x).

SELU_SCALE = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772


def _gelu(x):
    return x * special.ndtr(x)


def _gelu_d(x, y):
    return special.ndtr(x) + x * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def _swish(x):
    return x * special.expit(x)


def _swish_d(x, y):
    s = special.expit(x)
    return s + x * s * (1.0 - s)


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _selu(x):
    return SELU_SCALE * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


UNARY = {
    "identity": (lambda x: x.copy(), lambda x, y: np.ones_like(x)),
    "relu": (lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(np.float64)),
    "gelu": (_gelu, _gelu_d),
    "swish": (_swish, _swish_d),
    "elu": (_elu, lambda x, y: np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))),
    "selu": (_selu, lambda x, y: SELU_SCALE * np.where(
        x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))),
    "sigmoid": (special.expit, lambda x, y: y * (1.0 - y)),
    "softplus": (lambda x: np.logaddexp(0.0, x), lambda x, y: special.expit(x)),
    "tanh": (np.tanh, lambda x, y: 1.0 - y * y),
    "exp": (np.exp, lambda x, y: y),
    "log": (np.log, lambda x, y: 1.0 / x),
    "sqrt": (np.sqrt, lambda x, y: 0.5 / y),
    "square": (np.square, lambda x, y: 2.0 * x),
    "reciprocal": (lambda x: 1.0 / x, lambda x, y: -y * y),
}


def unary(kind, x):
    """Apply the registered elementwise function ``kind``."""
    try:
        f, df = UNARY[kind]
    except KeyError:
        raise ConfigError(f"unknown elementwise op {kind!r}") from None
    x = as_tensor(x)
    with np.errstate(all="ignore"):
        y = f(x.data)

    def backward(g):
        # look the rule up at backward time so a patched registry is honoured
        return (g * UNARY[kind][1](x.data, y),)

    return _node(y, (x,), backward, kind)


# -- normalised exponentials ------------------------------------------------

def softmax(x, axis=-1, mask=None):
    """Softmax along ``axis`` with max subtraction.

    ``mask`` is a boolean array broadcastable to ``x``; False entries get
    probability exactly 0.  Every slice must keep at least one entry.
    """
    x = as_tensor(x)
    if x.shape[axis] < 1:
        raise ConfigError("softmax over an empty axis")
    z = x.data if mask is None else np.where(mask, x.data, -np.inf)
    with np.errstate(invalid="ignore"):
        z = z - z.max(axis=axis, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        gx = y * (g - (g * y).sum(axis=axis, keepdims=True))
        return (_unbroadcast(gx, x.shape),)

    return _node(y, (x,), backward, "softmax")


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _node(y, (x,), backward, "log_softmax")


def logsumexp(x, axis=-1):
    """Composite: log(sum(exp(x - m))) + m with m held constant."""
    x = as_tensor(x)
    m = x.data.max(axis=axis, keepdims=True)
    s = sum(unary("exp", sub(x, m)), axis=axis, keepdims=True)
    return reshape(add(unary("log", s), m), np.squeeze(m, axis=axis).shape)


# -- shape manipulation ---------------------------------------------------

def reshape(x, shape):
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ConfigError(f"cannot reshape {x.shape} to {shape}") from exc
    return _node(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None):
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = np.argsort(axes)
    return _node(np.transpose(x.data, axes), (x,),
                 lambda g: (np.transpose(g, inverse),), "transpose")


def concat(xs, axis=0):
    xs = [as_tensor(x) for x in xs]
    out = np.concatenate([x.data for x in xs], axis=axis)
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(out, xs, backward, "concat")


def index(x, key):
    """Numpy-style indexing (slices, integer arrays); backward scatters."""
    x = as_tensor(x)
    out = x.data[key]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, key, g)
        return (gx,)

    return _node(np.array(out, copy=True), (x,), backward, "index")


def scatter_add(x, rows, n):
    """Rows of ``x`` added into a zero [n, ...] array at positions ``rows``."""
    x = as_tensor(x)
    rows = np.asarray(rows, dtype=np.intp)
    out = np.zeros((n,) + x.shape[1:])
    np.add.at(out, rows, x.data)
    return _node(out, (x,), lambda g: (g[rows],), "scatter_add")


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _node(out, (x,), backward, "sum")


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis, keepdims), 1.0 / n)


# -- randomness and initialisation ---------------------------------------

class Rng:
    """Counter-based stream: every draw is a fresh PCG64 keyed by
    (seed, counter), so equal seeds and call sequences give equal bits on
    every platform."""

    def __init__(self, seed=0):
        self.seed = int(seed)
        self.counter = 0

    def generator(self, *key):
        words = [self.seed & 0xFFFFFFFF, self.seed >> 32]
        for k in key:
            if isinstance(k, str):
                k = zlib.crc32(k.encode("utf-8"))
            words.append(int(k) & 0xFFFFFFFF)
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))

    def next(self):
        g = self.generator("draw", self.counter)
        self.counter += 1
        return g

    def normal(self, shape, std=1.0):
        return std * self.next().standard_normal(shape)

    def uniform(self, shape, low=0.0, high=1.0):
        return self.next().uniform(low, high, shape)

    def integers(self, low, high, shape=None):
        return self.next().integers(low, high, shape)


@dataclass(frozen=True)
class Init:
    """Initialisation scheme.  ``normal`` draws N(0, (scale/sqrt(fan_in))^2)."""

    kind: str = "normal"
    scale: float = 1.0
    value: float = 0.0
    fan_in: int | None = None

    @classmethod
    def normal(cls, scale=1.0, fan_in=None):
        return cls("normal", scale=scale, fan_in=fan_in)

    @classmethod
    def zeros(cls):
        return cls("zeros")

    @classmethod
    def ones(cls):
        return cls("ones")

    @classmethod
    def constant(cls, c):
        return cls("constant", value=float(c))


def init_param(rng, shape, scheme=Init(), name=""):
    """Deterministic initial values for a parameter of ``shape``.

    The draw is keyed by ``name`` so a parameter's value does not depend on
    the order in which a model declares its parameters.
    """
    shape = tuple(int(s) for s in shape)
    if scheme.kind == "zeros":
        return np.zeros(shape)
    if scheme.kind == "ones":
        return np.ones(shape)
    if scheme.kind == "constant":
        return np.full(shape, scheme.value)
    if scheme.kind == "normal":
        fan_in = scheme.fan_in
        if fan_in is None:
            fan_in = shape[-2] if len(shape) >= 2 else (shape[0] if shape else 1)
        std = scheme.scale / np.sqrt(fan_in)
        return std * rng.generator("init", name).standard_normal(shape)
    raise ConfigError(f"unknown init scheme {scheme.kind!r}")


# -- gradient checking ------------------------------------------------------

def grad_errors(f, params, eps=1e-5, max_entries=None, seed=0):
    """Per-parameter max relative error between tape and central differences.

    ``f`` maps ``params`` (anything exposing ``named_tensors()`` and
    ``zero_grad()``) to a scalar Tensor.  The error of one coordinate is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8); a central
    difference within two ulps of f is read as a zero slope.  With ``max_entries`` set, larger
    tensors are checked on that many randomly chosen coordinates.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ConfigError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    params.zero_grad()
    loss = f(params)
    if not np.isfinite(loss.data).all():
        raise NumericError("non-finite loss")
    loss.backward()
    pick = np.random.Generator(np.random.PCG64(seed))
    errors = {}
    for name, t in params.named_tensors():
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            coords = np.sort(pick.choice(flat.size, size=max_entries, replace=False))
        worst = 0.0
        for i in coords:
            old = flat[i]
            flat[i] = old + eps
            up = f(params).item()
            flat[i] = old - eps
            down = f(params).item()
            flat[i] = old
            diff = up - down
            # a difference at the last-bit level of f carries no slope information
            if abs(diff) <= 2.0 * np.spacing(max(abs(up), abs(down))):
                diff = 0.0
            numeric = diff / (2.0 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
        errors[name] = worst
    params.zero_grad()
    return errors


def grad_check(f, params, eps=1e-5, max_entries=None, seed=0):
    """Max relative gradient error over all checked coordinates."""
    errs = grad_errors(f, params, eps, max_entries, seed)
    return max(errs.values(), default=0.0)
