"""Tasks, optimiser, training loop and gradient-check runner."""

from .gradcheck import gradcheck_suite
from .optim import AdamHyper, adam_step, lr_at
from .tasks import TaskSpec, make_batch
from .train import TrainRun, train

__all__ = ["gradcheck_suite", "AdamHyper", "adam_step", "lr_at", "TaskSpec", "make_batch",
           "TrainRun", "train"]
