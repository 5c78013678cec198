"""Learning-rate schedules and Adam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, NumericError

SCHEDULES = ("inverse-sqrt", "constant")


def lr_at(schedule, step, warmup, peak):
    """Learning rate at ``step``.

    inverse-sqrt: peak * sqrt(warmup) * min(step * warmup^-1.5, step^-0.5),
    a linear ramp that peaks at ``step == warmup`` and then decays as
    1/sqrt(step).  constant: the same linear ramp, then ``peak``.
    """
    if warmup <= 0:
        raise ConfigError("warmup must be positive")
    if step < 0:
        raise ConfigError("step must be >= 0")
    if schedule == "inverse-sqrt":
        if step == 0:
            return 0.0
        return peak * np.sqrt(warmup) * min(step * warmup ** -1.5, step ** -0.5)
    if schedule == "constant":
        return peak * min(1.0, step / warmup)
    raise ConfigError(f"unknown schedule {schedule!r}; expected one of {SCHEDULES}")


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9


def adam_state(params):
    return {"t": 0, "m": {k: np.zeros_like(v) for k, v in params.items()},
            "v": {k: np.zeros_like(v) for k, v in params.items()}}


def adam_step(params, grads, state, hyper):
    """One bias-corrected Adam update of the arrays in ``params`` (in place).

    ``params`` and ``grads`` map names to arrays; a name missing from
    ``grads`` is treated as having zero gradient.
    """
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    state["t"] += 1
    t = state["t"]
    b1, b2 = hyper.beta1, hyper.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = state["m"][name] = b1 * state["m"][name] + (1.0 - b1) * g
        v = state["v"][name] = b2 * state["v"][name] + (1.0 - b2) * g * g
        p -= hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
    return state
