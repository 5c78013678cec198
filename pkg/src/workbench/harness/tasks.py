"""Synthetic sequence-to-sequence tasks.

Id 0 is reserved for the start/pad symbol.  ``copy`` and ``reverse`` use
content ids 1..vocab-1.  ``span`` (span corruption) reserves the top
``n_sentinels`` ids as sentinels: sentinel i is ``vocab - 1 - i``.
Batches depend only on (task seed, split, step).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..model import Batch
from ..numerics import Rng

TASK_KINDS = ("copy", "reverse", "span")


@dataclass(frozen=True)
class TaskSpec:
    kind: str = "copy"
    vocab: int = 32
    min_len: int = 16
    max_len: int = 16
    corruption_rate: float = 0.15
    mean_span: float = 3.0
    n_sentinels: int = 4
    seed: int = 0

    def validate(self):
        if self.kind not in TASK_KINDS:
            raise ConfigError(f"task kind must be one of {TASK_KINDS}, got {self.kind!r}")
        if not 1 <= self.min_len <= self.max_len:
            raise ConfigError("task lengths need 1 <= min_len <= max_len")
        lowest = 2 + (self.n_sentinels if self.kind == "span" else 0)
        if self.vocab < lowest:
            raise ConfigError(f"vocab {self.vocab} too small for task {self.kind!r}")
        if not 0 <= self.corruption_rate < 1:
            raise ConfigError("corruption_rate must lie in [0, 1)")
        if self.mean_span <= 0:
            raise ConfigError("mean_span must be positive")
        return self

    @property
    def content_high(self):
        """One past the largest content id."""
        return self.vocab - (self.n_sentinels if self.kind == "span" else 0)

    def target_len(self):
        if self.kind != "span":
            return self.max_len
        return self.max_len + self.n_sentinels


def sentinel(task, i):
    return task.vocab - 1 - i


def _segments(gen, total, parts):
    """Split ``total`` items into ``parts`` positive lengths uniformly at random."""
    if parts <= 1:
        return [total]
    cuts = np.sort(gen.choice(np.arange(1, total), size=parts - 1, replace=False))
    return np.diff(np.concatenate([[0], cuts, [total]])).tolist()


def corrupt_spans(task, x, gen):
    """(inputs, targets) for one sequence under span corruption."""
    n = len(x)
    n_noise = int(round(n * task.corruption_rate))
    n_noise = min(max(n_noise, 0), n - 1)
    if n_noise == 0:
        return list(x), [sentinel(task, 0)]
    n_spans = max(1, int(round(n_noise / task.mean_span)))
    n_spans = min(n_spans, n_noise, n - n_noise, task.n_sentinels)
    noise_lens = _segments(gen, n_noise, n_spans)
    keep_lens = _segments(gen, n - n_noise, n_spans)
    inputs, targets, pos = [], [], 0
    for i, (k, s) in enumerate(zip(keep_lens, noise_lens)):
        inputs.extend(x[pos:pos + k])
        pos += k
        inputs.append(sentinel(task, i))
        targets.append(sentinel(task, i))
        targets.extend(x[pos:pos + s])
        pos += s
    return inputs, targets


def apply_task(task, x, gen=None):
    """Inputs and targets for one content sequence ``x``."""
    x = [int(t) for t in x]
    if task.kind == "copy":
        return x, list(x)
    if task.kind == "reverse":
        return x, x[::-1]
    gen = gen if gen is not None else np.random.default_rng(0)
    return corrupt_spans(task, x, gen)


def _pad(rows, width):
    out = np.zeros((len(rows), width), dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=bool)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
        mask[i, :len(r)] = True
    return out, mask


def make_batch(task, step, batch_tokens, split="train"):
    """Deterministic batch of ``batch_tokens // max_len`` sequences."""
    task.validate()
    gen = Rng(task.seed).generator("batch", split, step)
    n = max(1, batch_tokens // task.max_len)
    xs, ys = [], []
    for _ in range(n):
        length = int(gen.integers(task.min_len, task.max_len + 1))
        content = gen.integers(1, task.content_high, size=length).tolist()
        x, y = apply_task(task, content, gen)
        xs.append(x)
        ys.append(y)
    x, x_mask = _pad(xs, max(len(r) for r in xs))
    y, y_mask = _pad(ys, max(len(r) for r in ys))
    return Batch(x, y, loss_mask=y_mask.astype(np.float64),
                 x_mask=None if x_mask.all() else x_mask)
