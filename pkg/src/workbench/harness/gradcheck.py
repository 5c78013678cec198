"""Finite-difference gradient check over the variant registry."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import Batch, Model, build_params
from ..numerics import grad_errors
from ..presets import TINY_VARIANTS

THRESHOLD = 1e-4


@dataclass
class GradcheckResult:
    name: str
    max_error: float | None
    worst_param: str | None
    error: str | None = None

    @property
    def passed(self):
        return self.error is None and self.max_error is not None and self.max_error < THRESHOLD

    def line(self):
        if self.error is not None:
            return f"FAIL {self.name}: {self.error}"
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name} max_rel_err={self.max_error:.3e} ({self.worst_param})"


def tiny_batch(config, seed=0, batch=2):
    gen = np.random.default_rng(seed)
    x = gen.integers(1, config.d_vocab, size=(batch, config.max_src_len))
    y = gen.integers(1, config.d_vocab, size=(batch, config.max_tgt_len))
    return Batch(x, y)


def check_config(name, config, eps=1e-5, max_entries=20, seed=0):
    try:
        params = build_params(config, seed + 1)
        model = Model(config, params)
        batch = tiny_batch(config, seed)
        errs = grad_errors(lambda p: model.forward(batch).loss, params, eps, max_entries, seed)
        worst = max(errs, key=errs.get)
        return GradcheckResult(name, errs[worst], worst)
    except Exception as exc:  # reported per variant; the suite continues
        return GradcheckResult(name, None, None, f"{type(exc).__name__}: {exc}")


def gradcheck_suite(names=None, eps=1e-5, max_entries=20, seed=0, registry=None):
    """Check every named variant (default: the whole tiny registry)."""
    registry = TINY_VARIANTS if registry is None else registry
    names = list(registry) if names is None else list(names)
    out = []
    for name in names:
        if name not in registry:
            out.append(GradcheckResult(name, None, None, "unknown variant"))
            continue
        out.append(check_config(name, registry[name], eps, max_entries, seed))
    return out
