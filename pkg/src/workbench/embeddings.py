"""Input embeddings, output softmax variants and cross-layer sharing.

Three roles need a vocabulary table: encoder input (``enc``), decoder input
(``dec``) and the output projection (``out``).  The tying scheme decides
which roles share one table; the table kind (full, factorized, adaptive
input, adaptive softmax) decides how lookups and logits are computed.
Token ids are frequency ranks, so cluster c holds a contiguous id range.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DataError
from .numerics import (Init, add, concat, index, log_softmax, logsumexp, matmul,
                       reshape, scatter_add, transpose, unary)

TIE_PREFIXES = {
    "tie-all": {"enc": "embed", "dec": "embed", "out": "embed"},
    "tie-enc-dec-input": {"enc": "embed", "dec": "embed", "out": "logits"},
    "tie-dec-input-output": {"enc": "embed.enc", "dec": "embed.dec", "out": "embed.dec"},
    "untied": {"enc": "embed.enc", "dec": "embed.dec", "out": "logits"},
}


def check_ids(ids, d_vocab):
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= d_vocab):
        raise DataError(f"token id outside [0, {d_vocab})")
    return ids


def _bounds(sizes):
    edges = np.concatenate([[0], np.cumsum(sizes)])
    return list(zip(edges[:-1].tolist(), edges[1:].tolist()))


class FullTable:
    """Dense [d_vocab, d_model] table used for lookup and (tied) logits."""

    def __init__(self, prefix, config):
        self.prefix, self.config = prefix, config

    def declare(self, store):
        c = self.config
        store.add(f"{self.prefix}.table", (c.d_vocab, c.d_model), Init.normal(fan_in=c.d_model))

    def lookup(self, store, ids):
        return index(store[f"{self.prefix}.table"], check_ids(ids, self.config.d_vocab))

    def logits(self, store, h):
        return matmul(h, transpose(store[f"{self.prefix}.table"]))


class FactorizedTable:
    """E = A B with A [d_vocab, d_inner] and B [d_inner, d_model]."""

    def __init__(self, prefix, config):
        self.prefix, self.config = prefix, config

    def declare(self, store):
        c = self.config
        d_inner = c.variant.embed_d_inner
        store.add(f"{self.prefix}.A", (c.d_vocab, d_inner), Init.normal(fan_in=d_inner))
        store.add(f"{self.prefix}.B", (d_inner, c.d_model), Init.normal(fan_in=c.d_model))

    def lookup(self, store, ids):
        rows = index(store[f"{self.prefix}.A"], check_ids(ids, self.config.d_vocab))
        return matmul(rows, store[f"{self.prefix}.B"])

    def logits(self, store, h):
        inner = matmul(h, transpose(store[f"{self.prefix}.B"]))
        return matmul(inner, transpose(store[f"{self.prefix}.A"]))


def _scatter_clusters(pieces, n, d, shape):
    out = None
    for rows, values in pieces:
        part = scatter_add(values, rows, n)
        out = part if out is None else add(out, part)
    if out is None:
        raise DataError("empty token batch")
    return reshape(out, tuple(shape) + (d,))


class AdaptiveInput:
    """Per-cluster tables of decreasing width, each projected to d_model."""

    def __init__(self, prefix, config, sizes, dims):
        if sum(sizes) != config.d_vocab:
            raise ConfigError("adaptive cluster sizes must sum to d_vocab")
        if len(dims) != len(sizes):
            raise ConfigError("one embedding dim per cluster required")
        self.prefix, self.config = prefix, config
        self.sizes, self.dims = list(sizes), list(dims)
        self.bounds = _bounds(sizes)

    def declare(self, store):
        d = self.config.d_model
        for c, (size, dim) in enumerate(zip(self.sizes, self.dims)):
            store.add(f"{self.prefix}.c{c}.table", (size, dim), Init.normal(fan_in=d))
            store.add(f"{self.prefix}.c{c}.proj", (dim, d), Init.normal(fan_in=dim))

    def lookup(self, store, ids):
        ids = check_ids(ids, self.config.d_vocab)
        flat = ids.reshape(-1)
        pieces = []
        for c, (lo, hi) in enumerate(self.bounds):
            rows = np.nonzero((flat >= lo) & (flat < hi))[0]
            if rows.size == 0:
                continue
            e = index(store[f"{self.prefix}.c{c}.table"], flat[rows] - lo)
            pieces.append((rows, matmul(e, store[f"{self.prefix}.c{c}.proj"])))
        return _scatter_clusters(pieces, flat.size, self.config.d_model, ids.shape)

    def logits(self, store, h):
        parts = []
        for c in range(len(self.sizes)):
            inner = matmul(h, transpose(store[f"{self.prefix}.c{c}.proj"]))
            parts.append(matmul(inner, transpose(store[f"{self.prefix}.c{c}.table"])))
        return concat(parts, axis=-1) if len(parts) > 1 else parts[0]


class AdaptiveSoftmax:
    """Two-level softmax: a head over cluster-0 words plus one gate per tail
    cluster, and a softmax inside each tail cluster.

    With ``project`` the tail hidden state is first projected down to the
    cluster's width; otherwise tails read d_model directly.  When the table
    is tied to input roles, its columns double as input embeddings.
    """

    def __init__(self, prefix, config, sizes, dims, project):
        if sum(sizes) != config.d_vocab:
            raise ConfigError("adaptive softmax clusters must sum to d_vocab")
        self.prefix, self.config = prefix, config
        self.sizes, self.dims, self.project = list(sizes), list(dims), project
        self.bounds = _bounds(sizes)
        self.n_head = sizes[0] + len(sizes) - 1

    def declare(self, store):
        d = self.config.d_model
        store.add(f"{self.prefix}.head", (d, self.n_head), Init.normal(fan_in=d))
        for c in range(1, len(self.sizes)):
            width = self.dims[c] if self.project else d
            if self.project:
                store.add(f"{self.prefix}.c{c}.proj", (d, width), Init.normal(fan_in=d))
            store.add(f"{self.prefix}.c{c}.out", (width, self.sizes[c]), Init.normal(fan_in=width))

    def _tail_hidden(self, store, h, c):
        if self.project:
            return matmul(h, store[f"{self.prefix}.c{c}.proj"])
        return h

    def log_probs(self, store, h):
        """Log-probabilities over the whole vocabulary, shape h.shape[:-1] + (V,)."""
        head = log_softmax(matmul(h, store[f"{self.prefix}.head"]))
        n0 = self.sizes[0]
        parts = [index(head, (Ellipsis, slice(0, n0)))]
        for c in range(1, len(self.sizes)):
            tail = log_softmax(matmul(self._tail_hidden(store, h, c), store[f"{self.prefix}.c{c}.out"]))
            gate = index(head, (Ellipsis, slice(n0 + c - 1, n0 + c)))
            parts.append(add(tail, gate))
        return concat(parts, axis=-1) if len(parts) > 1 else parts[0]

    def target_log_probs(self, store, h, targets):
        """log p(target) per position, evaluating each tail only on the
        positions whose target falls in it."""
        targets = check_ids(targets, self.config.d_vocab)
        d = self.config.d_model
        flat_t = targets.reshape(-1)
        n = flat_t.size
        hf = reshape(h, (n, d))
        head = log_softmax(matmul(hf, store[f"{self.prefix}.head"]))
        n0 = self.sizes[0]
        out = None
        for c, (lo, hi) in enumerate(self.bounds):
            rows = np.nonzero((flat_t >= lo) & (flat_t < hi))[0]
            if rows.size == 0:
                continue
            if c == 0:
                vals = index(head, (rows, flat_t[rows]))
            else:
                hc = index(hf, rows)
                tail = log_softmax(matmul(self._tail_hidden(store, hc, c), store[f"{self.prefix}.c{c}.out"]))
                vals = add(index(tail, (np.arange(rows.size), flat_t[rows] - lo)),
                           index(head, (rows, np.full(rows.size, n0 + c - 1))))
            part = scatter_add(vals, rows, n)
            out = part if out is None else add(out, part)
        return reshape(out, targets.shape)

    def lookup(self, store, ids):
        ids = check_ids(ids, self.config.d_vocab)
        flat = ids.reshape(-1)
        pieces = []
        for c, (lo, hi) in enumerate(self.bounds):
            rows = np.nonzero((flat >= lo) & (flat < hi))[0]
            if rows.size == 0:
                continue
            if c == 0:
                e = transpose(index(store[f"{self.prefix}.head"], (slice(None), flat[rows])))
            else:
                e = transpose(index(store[f"{self.prefix}.c{c}.out"], (slice(None), flat[rows] - lo)))
                if self.project:
                    e = matmul(e, transpose(store[f"{self.prefix}.c{c}.proj"]))
            pieces.append((rows, e))
        return _scatter_clusters(pieces, flat.size, self.config.d_model, ids.shape)


class MixtureOfSoftmaxes:
    """p = sum_k pi_k(h) softmax(tanh(h W_k + b_k) G^T) over a shared table G."""

    def __init__(self, prefix, config, table):
        if config.variant.softmax_K < 1:
            raise ConfigError("mixture of softmaxes needs K >= 1")
        self.prefix, self.config, self.table = prefix, config, table
        self.K = config.variant.softmax_K

    def declare(self, store):
        d, K = self.config.d_model, self.K
        store.add(f"{self.prefix}.prior", (d, K), Init.normal(fan_in=d))
        store.add(f"{self.prefix}.proj", (K, d, d), Init.normal(fan_in=d))
        store.add(f"{self.prefix}.proj_b", (K, 1, d), Init.zeros())

    def components(self, store, h):
        """(log mixture weights [N, K], component log-probs [K, N, V]) for h [N, d]."""
        prior = log_softmax(matmul(h, store[f"{self.prefix}.prior"]))
        hk = unary("tanh", add(matmul(reshape(h, (1,) + h.shape), store[f"{self.prefix}.proj"]),
                               store[f"{self.prefix}.proj_b"]))
        return prior, log_softmax(self.table.logits(store, hk))

    def log_probs(self, store, h):
        shape = h.shape
        hf = reshape(h, (int(np.prod(shape[:-1])), shape[-1]))
        prior, comp = self.components(store, hf)
        joint = add(reshape(transpose(prior), (self.K, hf.shape[0], 1)), comp)
        return reshape(logsumexp(joint, axis=0), shape[:-1] + (self.config.d_vocab,))


def build_tables(config):
    """Role -> table object; tied roles receive the very same object."""
    v = config.variant
    prefixes = TIE_PREFIXES[v.embed_tying]
    objects = {}
    roles = {}
    out_prefix = prefixes["out"]
    if v.softmax_kind == "adaptive":
        sizes = config.softmax_clusters()
        dims = config.cluster_dims(sizes, v.softmax_dims)
        objects[out_prefix] = AdaptiveSoftmax(out_prefix, config, sizes, dims, v.softmax_project)
    for role in ("enc", "dec"):
        p = prefixes[role]
        if p not in objects:
            if v.embed_adaptive_clusters:
                sizes = config.adaptive_clusters()
                objects[p] = AdaptiveInput(p, config, sizes, config.cluster_dims(sizes, v.embed_adaptive_dims))
            elif v.embed_factorized:
                objects[p] = FactorizedTable(p, config)
            else:
                objects[p] = FullTable(p, config)
        roles[role] = objects[p]
    if out_prefix not in objects:
        objects[out_prefix] = FullTable(out_prefix, config)
    roles["out"] = objects[out_prefix]
    return roles


def build_embedding_tables(config, store):
    """Declare every distinct vocabulary table and return the role map."""
    roles = build_tables(config)
    declared = set()
    for table in roles.values():
        if id(table) not in declared:
            declared.add(id(table))
            table.declare(store)
    return roles


def adaptive_input_embed(store, table, tokens):
    return table.lookup(store, tokens)


def adaptive_softmax(store, table, h_final):
    return table.log_probs(store, h_final)


def mixture_of_softmaxes(store, mos, h_final):
    return mos.log_probs(store, h_final)


# -- layer sharing -----------------------------------------------------------------

SHARED_STACKS = {"none": (), "block-all": ("enc", "dec"), "encoder-only": ("enc",),
                 "decoder-only": ("dec",)}


def apply_sharing(store, scheme):
    """Alias layer-l parameters of the affected stacks onto layer 0, one
    share-group per sub-block role."""
    try:
        stacks = SHARED_STACKS[scheme]
    except KeyError:
        raise ConfigError(f"unknown sharing scheme {scheme!r}") from None
    for name in store.names():
        parts = name.split(".")
        if len(parts) > 2 and parts[0] in stacks and parts[1].isdigit() and parts[1] != "0":
            target = ".".join([parts[0], "0"] + parts[2:])
            if target not in store:
                raise ConfigError(f"cannot share {name!r}: layer 0 has no {target!r}")
            store.alias(name, target)
    return store
