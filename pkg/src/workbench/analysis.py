"""Results tables and rank correlation between pre-training loss and
downstream scores.

Bundled tables use the CSV schema ``variant,params,ops,steps_per_s,
early_loss_mean,early_loss_std,final_loss,sglue,xsum,webq,wmt_ende``
with params in millions and ops in trillions; ``wmt_ende`` may be empty.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import DataError, ParseError

COLUMNS = ("variant", "params", "ops", "steps_per_s", "early_loss_mean", "early_loss_std",
           "final_loss", "sglue", "xsum", "webq", "wmt_ende")
OPTIONAL = ("wmt_ende",)
TASKS = ("sglue", "xsum", "webq")


@dataclass
class ResultsTable:
    rows: list = field(default_factory=list)  # dicts keyed by COLUMNS

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        if name not in COLUMNS:
            raise DataError(f"unknown column {name!r}")
        return [r[name] for r in self.rows]

    def names(self):
        return [r["variant"] for r in self.rows]

    def subset(self, keep):
        return ResultsTable([r for r in self.rows if keep(r)])


def _parse_number(text, column, line):
    if text == "" and column in OPTIONAL:
        return None
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: {text!r} is not a number", line) from None
    if not math.isfinite(value):
        raise ParseError(f"column {column!r}: value must be finite", line)
    return value


def parse_results(text):
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        raise ParseError("empty results file", 1)
    if tuple(h.strip() for h in rows[0]) != COLUMNS:
        raise ParseError(f"header must be {','.join(COLUMNS)}", 1)
    table = ResultsTable()
    seen = set()
    for n, raw in enumerate(rows[1:], start=2):
        if not raw or all(not c.strip() for c in raw):
            continue
        if len(raw) != len(COLUMNS):
            raise ParseError(f"expected {len(COLUMNS)} fields, got {len(raw)}", n)
        name = raw[0].strip()
        if not name:
            raise ParseError("empty variant name", n)
        if name in seen:
            raise ParseError(f"duplicate variant {name!r}", n)
        seen.add(name)
        row = {"variant": name}
        for col, cell in zip(COLUMNS[1:], raw[1:]):
            row[col] = _parse_number(cell.strip(), col, n)
        table.rows.append(row)
    if not table.rows:
        raise ParseError("results file has a header but no rows", 1)
    return table


def load_results(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_results(fh.read())


def _cell(v):
    if v is None:
        return ""
    return repr(v) if not float(v).is_integer() else str(int(v)) if abs(v) < 1e15 else repr(v)


def format_results(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in table.rows:
        w.writerow([r["variant"]] + [_cell(r[c]) for c in COLUMNS[1:]])
    return buf.getvalue()


def write_results(table, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_results(table))


def bundled_path(which):
    """Path of a bundled table: ``which`` is 1 or 2."""
    return resources.files("workbench") / "data" / f"table{int(which)}.csv"


def bundled_table(which):
    return parse_results(bundled_path(which).read_text(encoding="utf-8"))


# -- rank correlation -------------------------------------------------------------------

def average_ranks(values):
    """1-based ranks; tied values share the mean of the ranks they span."""
    a = np.asarray(values, dtype=np.float64)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(len(a))
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(xs, ys):
    """Pearson correlation of the average-rank vectors of xs and ys."""
    xs, ys = list(xs), list(ys)
    if len(xs) != len(ys):
        raise DataError("spearman_rho needs sequences of equal length")
    if len(xs) < 3:
        raise DataError("spearman_rho needs at least 3 points")
    if not all(math.isfinite(v) for v in xs + ys):
        raise DataError("spearman_rho needs finite values")
    rx, ry = average_ranks(xs), average_ranks(ys)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    sxx, syy = float(np.sum(dx * dx)), float(np.sum(dy * dy))
    if sxx == 0 or syy == 0:
        raise DataError("spearman_rho is undefined for a constant input")
    return float(np.clip(np.sum(dx * dy) / np.sqrt(sxx * syy), -1.0, 1.0))


@dataclass
class Correlation:
    task: str
    rho: float
    n: int


@dataclass
class CorrelationReport:
    label: str
    correlations: list
    sensitivity: list = field(default_factory=list)
    excluded: list = field(default_factory=list)

    def lines(self):
        out = [f"# {self.label}: Spearman rho between final_loss and each task score",
               "# sign: lower loss with higher score gives negative rho; |rho| is the magnitude"]
        for c in self.correlations:
            out.append(f"final_loss vs {c.task}: rho={c.rho:+.3f} |rho|={abs(c.rho):.3f} n={c.n}")
        if self.sensitivity:
            names = ", ".join(self.excluded) if self.excluded else "none"
            out.append(f"# sensitivity: excluding final_loss outliers beyond 1.5 IQR ({names})")
            for c in self.sensitivity:
                out.append(f"#   final_loss vs {c.task}: rho={c.rho:+.3f} |rho|={abs(c.rho):.3f} n={c.n}")
        return out


def _complete(table, task):
    return [r for r in table.rows if r["final_loss"] is not None and r.get(task) is not None]


def outlier_names(table):
    """Rows whose final_loss lies outside Tukey's 1.5 IQR fences."""
    losses = np.array([r["final_loss"] for r in table.rows])
    q1, q3 = np.percentile(losses, [25, 75])
    lo, hi = q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1)
    return [r["variant"] for r in table.rows if not lo <= r["final_loss"] <= hi]


def correlation_report(table, tasks=TASKS, label="results", sensitivity=True):
    """Per-task rho over every row with both final_loss and the task score."""
    if not len(table):
        raise DataError("empty results table")
    missing = [t for t in tasks if t not in COLUMNS]
    if missing:
        raise DataError(f"unknown task columns: {missing}")
    corr = []
    for task in tasks:
        rows = _complete(table, task)
        corr.append(Correlation(task, spearman_rho([r["final_loss"] for r in rows],
                                                   [r[task] for r in rows]), len(rows)))
    report = CorrelationReport(label, corr)
    if sensitivity:
        drop = set(outlier_names(table))
        kept = table.subset(lambda r: r["variant"] not in drop)
        report.excluded = sorted(drop)
        for task in tasks:
            rows = _complete(kept, task)
            if len(rows) >= 3:
                report.sensitivity.append(Correlation(task, spearman_rho(
                    [r["final_loss"] for r in rows], [r[task] for r in rows]), len(rows)))
    return report


def pooled(*tables):
    """Concatenate tables, suffixing variant names by table index to keep them unique."""
    out = ResultsTable()
    for i, t in enumerate(tables, start=1):
        for r in t.rows:
            out.rows.append(dict(r, variant=f"{r['variant']} [{i}]"))
    return out
