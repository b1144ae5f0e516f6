"""Accuracy, effectiveness/preservation scores, and comparison reports."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, NamedTuple, Sequence

from .errors import EvalError
from .reasoning import ReasoningOutcome


class EpsResult(NamedTuple):
    es: float | None
    ps: float | None
    eps: float | None
    note: str | None = None


@dataclass(frozen=True)
class EvalReport:
    method: str
    dataset_tag: str
    accuracy: float
    es: float | None
    ps: float | None
    eps: float | None
    q_true_size: int
    q_false_size: int
    avg_tokens: float
    per_question: dict[str, tuple[int | None, bool]]
    note: str | None = None

    def __post_init__(self) -> None:
        if (self.eps is None) != (self.es is None or self.ps is None):
            raise EvalError("eps must be set exactly when both es and ps are set")
        if self.q_true_size + self.q_false_size != len(self.per_question):
            raise EvalError("Q_true and Q_false must partition the evaluated questions")

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "dataset_tag": self.dataset_tag,
            "accuracy": self.accuracy,
            "es": self.es,
            "ps": self.ps,
            "eps": self.eps,
            "q_true_size": self.q_true_size,
            "q_false_size": self.q_false_size,
            "avg_tokens": self.avg_tokens,
            "per_question": {qid: list(v) for qid, v in sorted(self.per_question.items())},
            "note": self.note,
        }


def accuracy(outcomes: Sequence[ReasoningOutcome]) -> float:
    """Fraction of outcomes with a correct final answer; one outcome per question."""
    if not outcomes:
        raise EvalError("accuracy over an empty run")
    qids = [o.qid for o in outcomes]
    if len(set(qids)) != len(qids):
        dupes = sorted({q for q in qids if qids.count(q) > 1})
        raise EvalError(f"duplicate question ids in run: {dupes[:5]}")
    return sum(1 for o in outcomes if o.correct) / len(outcomes)


def harmonic_mean(es: float, ps: float) -> float:
    if es + ps == 0:
        return 0.0
    return 2.0 * es * ps / (es + ps)


def eps(
    baseline: Sequence[ReasoningOutcome], method: Sequence[ReasoningOutcome]
) -> EpsResult:
    """Score a method's fixes and breaks against the direct-answer baseline.

    The baseline run partitions questions into correct (Q_true) and wrong
    (Q_false) sets; es is the fraction of Q_false the method fixes, ps is one
    minus the fraction of Q_true it breaks, eps their harmonic mean. Empty
    partitions leave the affected scores unset with a note.
    """
    base_by_qid = {o.qid: o for o in baseline}
    method_by_qid = {o.qid: o for o in method}
    if len(base_by_qid) != len(baseline) or len(method_by_qid) != len(method):
        raise EvalError("duplicate question ids in eps() inputs")
    if set(base_by_qid) != set(method_by_qid):
        missing = set(base_by_qid) ^ set(method_by_qid)
        raise EvalError(f"baseline and method cover different questions: {sorted(missing)[:5]}")

    q_true = {qid for qid, o in base_by_qid.items() if o.correct}
    q_false = set(base_by_qid) - q_true

    es_value: float | None = None
    ps_value: float | None = None
    notes = []
    if q_false:
        fixed = sum(1 for qid in q_false if method_by_qid[qid].correct)
        es_value = fixed / len(q_false)
    else:
        notes.append("baseline answered everything correctly; es undefined")
    if q_true:
        broken = sum(1 for qid in q_true if not method_by_qid[qid].correct)
        ps_value = 1.0 - broken / len(q_true)
    else:
        notes.append("baseline answered nothing correctly; ps undefined")

    if es_value is None or ps_value is None:
        return EpsResult(es_value, ps_value, None, "; ".join(notes))
    return EpsResult(es_value, ps_value, harmonic_mean(es_value, ps_value), None)


def evaluate_run(
    method: str,
    outcomes: Sequence[ReasoningOutcome],
    baseline: Sequence[ReasoningOutcome],
    dataset_tag: str = "",
    tokens_total: int | None = None,
) -> EvalReport:
    """Assemble the full report row for one method run.

    tokens_total, when given, is the gateway's non-cached usage for the run;
    otherwise the per-outcome token counts are summed.
    """
    acc = accuracy(outcomes)
    scores = eps(baseline, outcomes)
    base_by_qid = {o.qid: o for o in baseline}
    q_true_size = sum(1 for o in base_by_qid.values() if o.correct)
    if tokens_total is None:
        tokens_total = sum(o.tokens_total for o in outcomes)
    return EvalReport(
        method=method,
        dataset_tag=dataset_tag,
        accuracy=acc,
        es=scores.es,
        ps=scores.ps,
        eps=scores.eps,
        q_true_size=q_true_size,
        q_false_size=len(base_by_qid) - q_true_size,
        avg_tokens=tokens_total / len(outcomes),
        per_question={o.qid: (o.final, o.correct) for o in outcomes},
        note=scores.note,
    )


def _fmt(value: float | None, digits: int = 3) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def render_table(runs: Sequence[EvalReport]) -> str:
    """Plain-text comparison table, one row per method, sorted by name."""
    header = f"{'method':<12} {'ACC':>7} {'ES':>7} {'PS':>7} {'EPS':>7} {'avg_tokens':>11}"
    lines = [header, "-" * len(header)]
    for r in sorted(runs, key=lambda r: r.method):
        lines.append(
            f"{r.method:<12} {r.accuracy:>7.3f} {_fmt(r.es):>7} {_fmt(r.ps):>7} "
            f"{_fmt(r.eps):>7} {r.avg_tokens:>11.2f}"
        )
    return "\n".join(lines) + "\n"


def report(runs: Sequence[EvalReport], out: str | Path) -> dict[str, Path]:
    """Write the JSON report, text table, and comparison figure into a directory."""
    if not runs:
        raise EvalError("report over an empty run list")
    tags = {r.dataset_tag for r in runs}
    if len(tags) > 1:
        raise EvalError(f"runs span multiple datasets: {sorted(tags)}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    ordered = sorted(runs, key=lambda r: r.method)
    json_path = out / "report.json"
    json_path.write_text(
        json.dumps({"runs": [r.to_dict() for r in ordered]}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    table_path = out / "report.txt"
    table_path.write_text(render_table(ordered), encoding="utf-8")

    from .figures import save_method_comparison

    figure_path = out / "report.png"
    save_method_comparison(ordered, figure_path)
    return {"json": json_path, "table": table_path, "figure": figure_path}
