"""Train the tiny baseline on the copy task and print the evaluation trace.

Usage: python demos/train_copy.py [steps] [variant]
The variant name is any key of the tiny registry (default: baseline at
d_model=64); other variants run at their tiny width with the copy vocabulary.
"""

import sys

from workbench.harness import TaskSpec, TrainRun, train
from workbench.presets import TINY_VARIANTS, at_task_scale, learnability_config


def main(argv):
    steps = int(argv[0]) if argv else 500
    name = argv[1] if len(argv) > 1 else None
    cfg = learnability_config() if name is None else at_task_scale(TINY_VARIANTS[name])
    task = TaskSpec("copy", vocab=32, min_len=16, max_len=16)

    def show(rec):
        if rec["eval_acc"] is not None:
            print(f"step {rec['step']:5d}  loss {rec['loss']:.4f}  eval_acc {rec['eval_acc']:.4f}", flush=True)

    result = train(TrainRun(cfg, task, steps=steps, eval_every=50), progress=show)
    print(f"final eval accuracy: {result.final_eval_acc():.4f}")


if __name__ == "__main__":
    main(sys.argv[1:])
