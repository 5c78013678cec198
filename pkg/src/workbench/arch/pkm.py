"""Product-key memory: a large value table addressed through two small key
tables.

The query is split into halves, each scored against its own key table.
Slot (i, j) scores s1[i] + s2[j].  The best ``knn`` slots are found by
keeping the top ``knn`` keys per half and ranking the knn^2 resulting
pairs.  Ordering is by score, then by the lower slot id, which makes the
two-stage search agree with an exhaustive scan even under ties.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..numerics import Init, add, index, matmul, mul, reshape, softmax, sum, transpose


def declare_pkm(store, prefix, config):
    v, d = config.variant, config.d_model
    n, dk, heads = v.pkm_n_keys_half, v.pkm_d_key, v.pkm_heads
    store.add(f"{prefix}.query", (d, heads * dk))
    store.add(f"{prefix}.keys1", (heads, n, dk // 2), Init.normal(fan_in=dk // 2))
    store.add(f"{prefix}.keys2", (heads, n, dk // 2), Init.normal(fan_in=dk // 2))
    store.add(f"{prefix}.values", (config.pkm_n_values, d), Init.normal(fan_in=d))


def _ranked(scores, slots, k):
    """Positions of the k best (score desc, slot asc) entries per row."""
    order = np.lexsort((slots, -scores), axis=-1)
    return order[..., :k]


def select_slots(s1, s2, knn):
    """Two-stage top-knn over product slots for scores s1, s2 [N, n].

    Returns (i, j) index arrays [N, knn] into the two halves.
    """
    N, n = s1.shape
    if knn > n * n:
        raise ConfigError(f"knn={knn} exceeds the {n * n} product slots")
    kk = min(knn, n)
    ids = np.arange(n)
    top1 = np.stack([_ranked(s1[r], ids, kk) for r in range(N)])
    top2 = np.stack([_ranked(s2[r], ids, kk) for r in range(N)])
    rows = np.arange(N)[:, None, None]
    cand = (s1[rows, top1[:, :, None]] + s2[rows, top2[:, None, :]]).reshape(N, kk * kk)
    ci = np.broadcast_to(top1[:, :, None], (N, kk, kk)).reshape(N, kk * kk)
    cj = np.broadcast_to(top2[:, None, :], (N, kk, kk)).reshape(N, kk * kk)
    slot = ci * n + cj
    best = np.stack([_ranked(cand[r], slot[r], knn) for r in range(N)])
    r = np.arange(N)[:, None]
    return ci[r, best], cj[r, best]


def brute_force_slots(s1, s2, knn):
    """Exhaustive scan over all n^2 slots (reference for tests)."""
    N, n = s1.shape
    full = (s1[:, :, None] + s2[:, None, :]).reshape(N, n * n)
    slots = np.arange(n * n)
    best = np.stack([_ranked(full[r], slots, knn) for r in range(N)])
    return best // n, best % n


def pkm_lookup(x, params, prefix, config, return_slots=False):
    """Memory read for x [..., d]: softmax over the selected slot scores,
    weighted sum of their value rows, summed over heads."""
    v = config.variant
    n, dk, heads, knn = v.pkm_n_keys_half, v.pkm_d_key, v.pkm_heads, v.pkm_knn
    if config.pkm_n_values != n * n:
        raise ConfigError("pkm value table must have one row per product slot")
    shape = x.shape
    d = shape[-1]
    N = int(np.prod(shape[:-1]))
    q = reshape(matmul(reshape(x, (N, d)), params[f"{prefix}.query"]), (N, heads, dk))
    half = dk // 2
    rows = np.arange(N)[:, None]
    out, picked = None, []
    for h in range(heads):
        q1 = index(q, (slice(None), h, slice(0, half)))
        q2 = index(q, (slice(None), h, slice(half, dk)))
        s1 = matmul(q1, transpose(index(params[f"{prefix}.keys1"], h)))
        s2 = matmul(q2, transpose(index(params[f"{prefix}.keys2"], h)))
        i, j = select_slots(s1.data, s2.data, knn)
        scores = add(index(s1, (rows, i)), index(s2, (rows, j)))
        w = softmax(scores, axis=-1)
        slot = i * n + j
        vals = index(params[f"{prefix}.values"], slot)             # [N, knn, d]
        read = sum(mul(reshape(w, (N, knn, 1)), vals), axis=1)
        out = read if out is None else add(out, read)
        picked.append(slot)
    y = reshape(out, shape)
    return (y, picked) if return_slots else y
