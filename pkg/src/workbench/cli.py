"""Command-line front end: ``workbench <subcommand> [options]``.

Exit codes: 0 on success, 1 on a validation, parse or data error, 2 on a
numeric failure (including any gradient-check FAIL).  Errors go to standard
error as ``ERROR:<category>: message``.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys

from .accounting import depth_width_presets, estimate_flops
from .analysis import bundled_table, correlation_report, load_results, pooled
from .config import ModelConfig, format_spec, load_spec
from .errors import ConfigError, WorkbenchError
from .presets import TABLE_PRESETS, TINY_VARIANTS, UNSUPPORTED, slug

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2
TASK_ALIASES = {"copy": "copy", "reverse": "reverse", "span": "span", "toy-span-corruption": "span"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def default_seed():
    raw = os.environ.get("WORKBENCH_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"WORKBENCH_SEED must be an integer, got {raw!r}") from None


def _config(args):
    return load_spec(args.spec) if args.spec else ModelConfig.baseline()


def _count_table(report, with_flops):
    out = io.StringIO()
    rows = report.rows()
    width = max([len(r[0]) for r in rows] + [9])
    out.write(f"total_params = {report.total_params} ({report.total_params / 1e6:.2f}M)\n")
    if with_flops:
        out.write(f"flops_forward_per_token = {report.flops_forward_per_token}\n")
        out.write(f"flops_train_step = {report.flops_train_step}\n")
    out.write(f"{'component':<{width}}  {'params':>14}  {'flops_fwd':>18}\n")
    for name, p, f in rows:
        out.write(f"{name:<{width}}  {p:>14}  {f:>18}\n")
    for note in report.notes:
        out.write(f"# {note}\n")
    out.write("\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["component", "params", "flops_fwd"])
    w.writerows(rows)
    return out.getvalue()


def cmd_count(args):
    report = estimate_flops(_config(args), args.src_len, args.tgt_len, args.batch_tokens)
    sys.stdout.write(_count_table(report, with_flops=args.command == "flops"))
    return EXIT_OK


def cmd_gradcheck(args):
    from .harness.gradcheck import gradcheck_suite

    if args.all == bool(args.variants):
        raise ConfigError("gradcheck needs variant names or --all (not both)")
    names = None if args.all else args.variants
    unknown = [n for n in (names or []) if n not in TINY_VARIANTS]
    if unknown:
        raise ConfigError(f"unknown variants: {', '.join(unknown)}")
    results = gradcheck_suite(names, eps=args.eps, seed=args.seed)
    for r in results:
        print(r.line(), flush=True)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} passed")
    return EXIT_OK if not failed else EXIT_NUMERIC


def cmd_train(args):
    from .harness.tasks import TaskSpec
    from .harness.train import TrainRun, train

    cfg = _config(args) if args.spec else ModelConfig.tiny()
    kind = TASK_ALIASES.get(args.task)
    if kind is None:
        raise ConfigError(f"unknown task {args.task!r}")
    length = args.length or min(16, cfg.max_src_len)
    task = TaskSpec(kind, vocab=args.vocab or cfg.d_vocab, min_len=length, max_len=length,
                    seed=args.seed)
    if task.target_len() > cfg.max_tgt_len:
        raise ConfigError(f"task targets of length {task.target_len()} exceed max_tgt_len {cfg.max_tgt_len}")
    run = TrainRun(cfg, task, steps=args.steps, seed=args.seed, lr=args.lr, warmup=args.warmup,
                   batch_tokens=args.batch_tokens, eval_every=args.eval_every)
    result = train(run, log_path=args.out)
    if args.out is None:
        from .harness.train import metrics_csv
        sys.stdout.write(metrics_csv(result.records))
    acc = result.final_eval_acc()
    print(f"final_eval_acc = {acc!r}" if acc is not None else "final_eval_acc = n/a",
          file=sys.stderr if args.out is None else sys.stdout)
    if result.aborted:
        print(f"ERROR:numeric: run aborted at {result.aborted}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_analyze(args):
    if args.both:
        table = pooled(bundled_table(1), bundled_table(2))
        label = "bundled tables 1 and 2 pooled"
    elif args.results:
        table, label = load_results(args.results), args.results
    else:
        table, label = bundled_table(1), "bundled table 1"
    tasks = tuple(args.tasks.split(",")) if args.tasks else ("sglue", "xsum", "webq")
    report = correlation_report(table, tasks=tasks, label=label)
    print("# rows: every row with both final_loss and the task score")
    for line in report.lines():
        print(line)
    return EXIT_OK


def cmd_presets(args):
    out = args.out
    os.makedirs(out, exist_ok=True)
    index = [("name", "file", "status")]
    labels = ("baseline", "depth-24-dff-1536", "depth-18-dff-2048", "depth-8-dff-4608",
              "depth-6-dff-6144")
    for label, cfg in zip(labels, depth_width_presets()):
        fname = f"depth-width-{label}.spec"
        _write(os.path.join(out, fname), format_spec(cfg, header=f"depth/width preset {label}"))
        index.append((label, fname, "ok"))
    for name, cfg in TABLE_PRESETS.items():
        if cfg == UNSUPPORTED:
            index.append((name, "", UNSUPPORTED))
            continue
        fname = f"table-{slug(name)}.spec"
        _write(os.path.join(out, fname), format_spec(cfg, header=f"results-table row: {name}"))
        index.append((name, fname, "ok"))
    for name, cfg in TINY_VARIANTS.items():
        fname = f"tiny-{name}.spec"
        _write(os.path.join(out, fname), format_spec(cfg, header=f"tiny variant: {name}"))
        index.append((name, fname, "ok"))
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(index)
    _write(os.path.join(out, "index.csv"), buf.getvalue())
    print(f"wrote {len(index) - 1} entries to {out}")
    return EXIT_OK


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def build_parser(seed):
    p = _Parser(prog="workbench", description="Transformer modification workbench.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("count", "flops"):
        s = sub.add_parser(name, help=f"{name} report for a spec file (default: full-size baseline)")
        s.add_argument("--spec")
        s.add_argument("--src-len", type=int, default=512)
        s.add_argument("--tgt-len", type=int, default=128)
        s.add_argument("--batch-tokens", type=int, default=65536)
        s.set_defaults(func=cmd_count)
    s = sub.add_parser("gradcheck", help="finite-difference check of tiny variants")
    s.add_argument("variants", nargs="*")
    s.add_argument("--all", action="store_true")
    s.add_argument("--eps", type=float, default=1e-5)
    s.add_argument("--seed", type=int, default=seed)
    s.set_defaults(func=cmd_gradcheck)
    s = sub.add_parser("train", help="desk-scale training run (default: tiny baseline)")
    s.add_argument("--spec")
    s.add_argument("--steps", type=int, default=200)
    s.add_argument("--seed", type=int, default=seed)
    s.add_argument("--task", default="copy")
    s.add_argument("--out")
    s.add_argument("--lr", type=float, default=3e-3)
    s.add_argument("--warmup", type=int, default=100)
    s.add_argument("--batch-tokens", type=int, default=1024)
    s.add_argument("--eval-every", type=int, default=100)
    s.add_argument("--length", type=int)
    s.add_argument("--vocab", type=int)
    s.set_defaults(func=cmd_train)
    s = sub.add_parser("analyze", help="rank correlation of final loss with task scores")
    s.add_argument("--results")
    s.add_argument("--both", action="store_true", help="pool both bundled tables")
    s.add_argument("--tasks", help="comma-separated task columns")
    s.set_defaults(func=cmd_analyze)
    s = sub.add_parser("presets", help="write preset spec files")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_presets)
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser(default_seed()).parse_args(argv)
        return args.func(args)
    except WorkbenchError as exc:
        print(f"ERROR:{exc.category}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if exc.category == "numeric" else EXIT_INVALID
    except OSError as exc:
        print(f"ERROR:io: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
