"""Adaptive-computation recurrence over one shared block.

Each token keeps a running sum of halting probabilities.  At every step a
still-running token contributes its new state weighted by its halting
probability, unless that probability would push the sum past the
threshold (or the step cap is reached); then it contributes the
remainder 1 - sum and stops.  Halted tokens keep their state fixed while
others continue.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..numerics import Init, Tensor, add, matmul, mean, mul, reshape, sub, unary
from ..positional import sinusoidal_table


def declare_halting(store, prefix, config):
    store.add(f"{prefix}.halt.w", (config.d_model, 1))
    # negative bias: tokens start by pondering for a few steps
    store.add(f"{prefix}.halt.b", (1,), Init.constant(-1.0))


def halting_unit(params, prefix):
    def fn(state, step):
        B, T, d = state.shape
        z = add(matmul(state, params[f"{prefix}.halt.w"]), params[f"{prefix}.halt.b"])
        return reshape(unary("sigmoid", z), (B, T))
    return fn


def universal_step(state, step_fn, halting_fn, max_steps=24, threshold=0.5, step_signal=True,
                   return_stats=False):
    """Run ``step_fn`` (the shared block) up to ``max_steps`` times.

    ``halting_fn(state, step)`` gives per-token halting probabilities
    [B, T] for the step's input.  Returns (output, ponder loss) where the
    ponder loss is mean(n_updates + remainder).
    """
    if max_steps < 1:
        raise ConfigError("max_steps must be >= 1")
    B, T, d = state.shape
    signal = sinusoidal_table(max_steps, d) if step_signal else None
    cum = np.zeros((B, T))
    cum_t = Tensor(np.zeros((B, T)))
    halted = np.zeros((B, T), dtype=bool)
    n_updates = np.zeros((B, T))
    remainder = Tensor(np.zeros((B, T)))
    out = Tensor(np.zeros((B, T, d)))
    s = state
    for t in range(max_steps):
        running = ~halted
        if not running.any():
            break
        s_in = add(s, signal[t]) if signal is not None else s
        p = halting_fn(s_in, t)
        s_new = step_fn(s_in)
        last = t == max_steps - 1
        stop = running & ((cum + p.data > threshold) | last)
        go = running & ~stop
        rem = mul(sub(1.0, cum_t), stop.astype(np.float64))
        w = add(mul(p, go.astype(np.float64)), rem)
        out = add(out, mul(s_new, reshape(w, (B, T, 1))))
        remainder = add(remainder, rem)
        cum_t = add(cum_t, mul(p, go.astype(np.float64)))
        cum = cum + p.data * go
        n_updates = n_updates + running
        halted = halted | stop
        keep = running.astype(np.float64)[..., None]
        s = add(mul(s_new, keep), mul(s, 1.0 - keep))
    ponder = mean(add(remainder, n_updates))
    if return_stats:
        return out, ponder, {"n_updates": n_updates, "remainder": remainder.data}
    return out, ponder
