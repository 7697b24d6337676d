"""Evaluation metrics: precision/recall/F2, effectiveness, cost, box plots.

Effectiveness is the macro average of per-rationale recall; cost is the
average fraction of the corpus an analyst must inspect. F2 weighs recall
higher than precision, which fits impact analysis: a missed impacted
requirement is costlier than an extra candidate to review.
"""

from __future__ import annotations

import io
import warnings as _warnings
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal


@dataclass(frozen=True)
class ConfusionCounts:
    rationale_id: str
    tp: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")


@dataclass(frozen=True)
class DistributionSummary:
    median: float
    q1: float
    q3: float
    iqr: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]


@dataclass(frozen=True)
class EvalRow:
    rationale_id: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f2: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    micro_precision: float
    micro_recall: float
    micro_f2: float
    effectiveness: float
    cost: float
    n_rationales: int
    n_req: int


def confusion(predicted, gold, rationale_id: str = "") -> ConfusionCounts:
    """TP/FP/FN between a predicted id set and a gold id set."""
    p, g = set(predicted), set(gold)
    return ConfusionCounts(
        rationale_id=rationale_id,
        tp=len(p & g),
        fp=len(p - g),
        fn=len(g - p),
    )


def prf2(counts: ConfusionCounts) -> tuple[float, float, float]:
    """Precision, recall, and F2 for one rationale.

    Degenerate cases: with nothing retrieved, precision is 1 when the gold
    set is also empty and 0 otherwise; recall over an empty gold set is 1.
    """
    if counts.tp + counts.fp == 0:
        precision = 1.0 if counts.fn == 0 else 0.0
    else:
        precision = counts.tp / (counts.tp + counts.fp)
    if counts.tp + counts.fn == 0:
        recall = 1.0
    else:
        recall = counts.tp / (counts.tp + counts.fn)
    if precision == 0.0 and recall == 0.0:
        f2 = 0.0
    else:
        f2 = 5.0 * precision * recall / (4.0 * precision + recall)
    return precision, recall, f2


def f2_score(precision: float, recall: float) -> float:
    if precision == 0.0 and recall == 0.0:
        return 0.0
    return 5.0 * precision * recall / (4.0 * precision + recall)


def effectiveness(counts: list[ConfusionCounts]) -> float:
    """Macro-averaged recall over change rationales.

    A rationale with an empty gold set counts as recall 1 when nothing was
    predicted for it; otherwise it is excluded from the mean with a warning
    (its recall is undefined but retrieving anything was not free).
    """
    if not counts:
        raise ValueError("effectiveness over an empty list")
    recalls: list[float] = []
    for c in counts:
        if c.tp + c.fn == 0:
            if c.fp == 0:
                recalls.append(1.0)
            else:
                _warnings.warn(
                    f"rationale {c.rationale_id or '<unnamed>'} has empty gold but "
                    "non-empty prediction; excluded from effectiveness",
                    stacklevel=2,
                )
        else:
            recalls.append(c.tp / (c.tp + c.fn))
    if not recalls:
        raise ValueError("no rationale with defined recall")
    return sum(recalls) / len(recalls)


def cost(counts: list[ConfusionCounts], n_req: int) -> float:
    """Average fraction of the corpus retrieved per change rationale."""
    if n_req <= 0:
        raise ValueError("n_req must be positive")
    if not counts:
        raise ValueError("cost over an empty list")
    return sum((c.tp + c.fp) / n_req for c in counts) / len(counts)


def boxplot_summary(values: list[float]) -> DistributionSummary:
    """Tukey box-plot summary with linear-interpolation quartiles.

    Whiskers sit on the most extreme data points within 1.5 IQR of the
    quartiles; anything beyond is an outlier.
    """
    if not values:
        raise ValueError("boxplot_summary over an empty list")
    data = sorted(float(v) for v in values)

    def quantile(q: float) -> float:
        pos = (len(data) - 1) * q
        lo = int(pos)
        hi = min(lo + 1, len(data) - 1)
        frac = pos - lo
        return data[lo] * (1.0 - frac) + data[hi] * frac

    q1, median, q3 = quantile(0.25), quantile(0.5), quantile(0.75)
    iqr = q3 - q1
    low_fence = q1 - 1.5 * iqr
    high_fence = q3 + 1.5 * iqr
    inside = [v for v in data if low_fence <= v <= high_fence]
    outliers = tuple(v for v in data if v < low_fence or v > high_fence)
    return DistributionSummary(
        median=median,
        q1=q1,
        q3=q3,
        iqr=iqr,
        whisker_low=min(inside) if inside else q1,
        whisker_high=max(inside) if inside else q3,
        outliers=outliers,
    )


def build_report(counts: list[ConfusionCounts], n_req: int) -> EvalReport:
    """Per-rationale rows plus micro and macro aggregates."""
    rows = []
    for c in counts:
        precision, recall, f2 = prf2(c)
        rows.append(
            EvalRow(
                rationale_id=c.rationale_id,
                tp=c.tp,
                fp=c.fp,
                fn=c.fn,
                precision=precision,
                recall=recall,
                f2=f2,
            )
        )
    total = ConfusionCounts(
        rationale_id="<micro>",
        tp=sum(c.tp for c in counts),
        fp=sum(c.fp for c in counts),
        fn=sum(c.fn for c in counts),
    )
    micro_p, micro_r, micro_f2 = prf2(total)
    return EvalReport(
        rows=tuple(rows),
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f2=micro_f2,
        effectiveness=effectiveness(counts),
        cost=cost(counts, n_req),
        n_rationales=len(counts),
        n_req=n_req,
    )


def percent(value: float, decimals: int = 1) -> str:
    """Render a rate as a percentage, rounded half-up."""
    quantum = Decimal(1).scaleb(-decimals)
    # repr() yields the shortest decimal round-tripping the float, so values
    # meant to sit exactly on a .x5 boundary round up as intended.
    return str(Decimal(repr(value * 100)).quantize(quantum, rounding=ROUND_HALF_UP))


_COLUMNS = ("rationale_id", "TP", "FP", "FN", "P", "R", "F2")


def render_report(report: EvalReport, fmt: str = "csv") -> str:
    """Render an EvalReport as csv or markdown with a stable column order."""
    if fmt not in ("csv", "markdown"):
        raise ValueError(f"unknown report format {fmt!r}")
    cells = [
        (
            row.rationale_id,
            str(row.tp),
            str(row.fp),
            str(row.fn),
            percent(row.precision),
            percent(row.recall),
            percent(row.f2),
        )
        for row in report.rows
    ]
    footer = [
        ("micro", str(sum(r.tp for r in report.rows)), str(sum(r.fp for r in report.rows)),
         str(sum(r.fn for r in report.rows)), percent(report.micro_precision),
         percent(report.micro_recall), percent(report.micro_f2)),
        ("eff", "", "", "", "", "", percent(report.effectiveness)),
        ("cost", "", "", "", "", "", percent(report.cost)),
    ]
    out = io.StringIO()
    if fmt == "csv":
        out.write(",".join(_COLUMNS) + "\n")
        for row in cells + footer:
            out.write(",".join(row) + "\n")
    else:
        out.write("| " + " | ".join(_COLUMNS) + " |\n")
        out.write("|" + "|".join([" --- "] * len(_COLUMNS)) + "|\n")
        for row in cells + footer:
            out.write("| " + " | ".join(cell or " " for cell in row) + " |\n")
    return out.getvalue()


@dataclass(frozen=True)
class StageResult:
    """Aggregate counts for one pipeline stage on one dataset."""

    stage: str
    tp: int
    fn: int
    fp: int
    effectiveness: float
    cost: float


def render_stage_table(results: list[StageResult]) -> str:
    """Markdown table of per-stage totals (TP/FN/FP plus eff and cost)."""
    lines = [
        "| Stage | TP | FN | FP | eff | cost |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    for r in results:
        lines.append(
            f"| {r.stage} | {r.tp} | {r.fn} | {r.fp} "
            f"| {percent(r.effectiveness)}% | {percent(r.cost)}% |"
        )
    return "\n".join(lines) + "\n"
