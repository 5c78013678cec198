"""Deterministic teacher-forced training loop."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from ..accounting import count_params
from ..config import ModelConfig
from ..errors import ConfigError, NumericError
from ..model import Model, build_params, token_accuracy
from .optim import AdamHyper, adam_state, adam_step, lr_at
from .tasks import TaskSpec, make_batch

METRIC_FIELDS = ("step", "loss", "lr", "grad_norm", "eval_acc")
DIVERGENCE_LOSS = 1e4


@dataclass(frozen=True)
class TrainRun:
    config: ModelConfig
    task: TaskSpec = TaskSpec()
    steps: int = 200
    seed: int = 0
    lr: float = 3e-3
    warmup: int = 100
    schedule: str = "inverse-sqrt"
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    batch_tokens: int = 1024
    eval_every: int = 100
    eval_tokens: int = 1024

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass
class TrainResult:
    records: list = field(default_factory=list)
    aborted: str | None = None
    params: object = None

    @property
    def losses(self):
        return [r["loss"] for r in self.records if r["step"] > 0 and r["loss"] is not None]

    def final_eval_acc(self):
        accs = [r["eval_acc"] for r in self.records if r["eval_acc"] is not None]
        return accs[-1] if accs else None


def evaluate(model, task, tokens, step=0):
    batch = make_batch(task, step, tokens, split="eval")
    out = model.forward(batch, need_log_probs=True)
    return token_accuracy(out.log_probs, batch.y, batch.loss_mask), out.ce.item()


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def metrics_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_FIELDS)
    for r in records:
        w.writerow([_fmt(r[k]) for k in METRIC_FIELDS])
    return buf.getvalue()


def train(run: TrainRun, log_path=None, progress=None):
    """Train ``run.config`` on ``run.task``; returns a :class:`TrainResult`.

    Every step logs (loss, lr, grad_norm); evaluation accuracy is logged
    at step 0 and every ``eval_every`` steps.  A non-finite value or a
    loss above 1e4 stops the run with ``aborted`` set.
    """
    cfg = run.config
    cfg.validate()
    run.task.validate()
    if run.steps < 0:
        raise ConfigError("steps must be >= 0")
    if run.task.vocab > cfg.d_vocab:
        raise ConfigError(f"task vocab {run.task.vocab} exceeds model d_vocab {cfg.d_vocab}")
    params = build_params(cfg, run.seed)
    expected = count_params(cfg).total_params
    if expected != params.num_scalars():
        raise ConfigError(f"parameter accounting mismatch: {expected} vs {params.num_scalars()}")
    model = Model(cfg, params)
    result = TrainResult(params=params)
    acc, _ = evaluate(model, run.task, run.eval_tokens)
    result.records.append({"step": 0, "loss": None, "lr": None, "grad_norm": None, "eval_acc": acc})
    named = params.named_tensors()
    arrays = {n: t.data for n, t in named}
    state = adam_state(arrays)
    for step in range(1, run.steps + 1):
        lr = lr_at(run.schedule, step, run.warmup, run.lr)
        batch = make_batch(run.task, step, run.batch_tokens)
        params.zero_grad()
        try:
            loss = model.forward(batch).loss
            value = loss.item()
            if not value <= DIVERGENCE_LOSS:
                raise NumericError(f"loss {value!r} exceeds {DIVERGENCE_LOSS:g}")
            loss.backward()
            grads = {n: t.grad for n, t in named if t.grad is not None}
            norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
            adam_step(arrays, grads, state, AdamHyper(lr, run.beta1, run.beta2, run.eps))
        except NumericError as exc:
            result.aborted = f"step {step}: {exc}"
            result.records.append({"step": step, "loss": None, "lr": lr, "grad_norm": None,
                                   "eval_acc": None})
            break
        acc = None
        if run.eval_every and step % run.eval_every == 0:
            acc, _ = evaluate(model, run.task, run.eval_tokens)
        result.records.append({"step": step, "loss": value, "lr": lr, "grad_norm": norm, "eval_acc": acc})
        if progress is not None:
            progress(result.records[-1])
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(metrics_csv(result.records))
    return result
