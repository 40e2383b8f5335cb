"""Set-based binary classification metrics and the F-beta report table.

Undefined metrics (zero denominators) are reported as absent, never as
zero, so an empty prediction set cannot masquerade as perfect precision.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UsageError

ABSENT_MARK = "—"  # em dash in report layouts


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise UsageError(f"confusion count {name} is negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def retrieved(self) -> int:
        return self.tp + self.fp

    @property
    def relevant_retrieved(self) -> int:
        return self.tp


def confusion(predicted, truth, universe) -> ConfusionCounts:
    predicted = set(predicted)
    truth = set(truth)
    universe = set(universe)
    if not predicted <= universe:
        raise UsageError("predicted set contains ids outside the universe: "
                         f"{sorted(predicted - universe)[:5]}")
    if not truth <= universe:
        raise UsageError("truth set contains ids outside the universe: "
                         f"{sorted(truth - universe)[:5]}")
    tp = len(predicted & truth)
    fp = len(predicted - truth)
    fn = len(truth - predicted)
    tn = len(universe) - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


@dataclass
class PrfResult:
    precision: float | None
    recall: float | None
    f_beta: float | None
    beta: float


def f_beta_from_pr(precision: float | None, recall: float | None,
                   beta: float) -> float | None:
    """F_beta = (1+beta^2)PR / (beta^2 P + R); None when either input is
    absent or both are zero."""
    if beta <= 0:
        raise UsageError(f"beta must be positive, got {beta}")
    if precision is None or recall is None or not (precision or recall):
        return None
    b2 = beta * beta
    return (1 + b2) * precision * recall / (b2 * precision + recall)


def precision_recall_f(counts: ConfusionCounts, beta: float = 1.0) -> PrfResult:
    """P, R, and F_beta from set counts; each is None when its denominator
    vanishes."""
    if beta <= 0:
        raise UsageError(f"beta must be positive, got {beta}")
    precision = counts.tp / counts.retrieved if counts.retrieved else None
    actual_pos = counts.tp + counts.fn
    recall = counts.tp / actual_pos if actual_pos else None
    return PrfResult(precision, recall, f_beta_from_pr(precision, recall, beta),
                     beta)


def accuracy(counts: ConfusionCounts) -> float:
    if counts.total == 0:
        raise UsageError("accuracy over an empty universe")
    return (counts.tp + counts.tn) / counts.total


def format_metric(value: float | None) -> str:
    """Four decimals (round-half-even via float formatting), absent -> em
    dash; matches the report tables' precision."""
    return ABSENT_MARK if value is None else f"{value:.4f}"


@dataclass
class ReportRow:
    name: str
    counts: ConfusionCounts

    def cells(self) -> list[str]:
        f1 = precision_recall_f(self.counts, 1.0)
        f05 = precision_recall_f(self.counts, 0.5)
        return [self.name, str(self.counts.retrieved),
                str(self.counts.relevant_retrieved),
                format_metric(f1.precision), format_metric(f1.recall),
                format_metric(f1.f_beta), format_metric(f05.f_beta)]


def format_report(rows) -> str:
    """Aligned text table: RETR., REL., P, R, F1, F0.5 per row."""
    header = ["run", "RETR.", "REL.", "P", "R", "F1", "F0.5"]
    table = [header] + [row.cells() for row in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = []
    for r in table:
        cells = [r[0].ljust(widths[0])]
        cells += [r[i].rjust(widths[i]) for i in range(1, len(header))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"
