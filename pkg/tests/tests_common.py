"""Builders for synthetic outcomes used by metric tests."""

from __future__ import annotations

from knowpipe.core import AnswerSample
from knowpipe.reasoning import ReasoningOutcome


def outcome(qid: str, correct: bool, strategy: str = "few_shot") -> ReasoningOutcome:
    """A minimal one-sample outcome over a 2-option question with gold 0."""
    parsed = 0 if correct else 1
    sample = AnswerSample(
        qid=qid,
        condition="direct",
        rationale_ids=(),
        raw_text=f"Answer: ({parsed + 1})",
        parsed=parsed,
        valid=True,
        tokens_in=7,
        tokens_out=2,
    )
    return ReasoningOutcome(
        qid=qid,
        strategy=strategy,
        samples=(sample,),
        vote_histogram={parsed: 1},
        final=parsed,
        correct=correct,
        tokens_total=9,
    )


def outcomes_from_bools(flags, prefix: str = "q") -> list[ReasoningOutcome]:
    return [outcome(f"{prefix}{i}", flag) for i, flag in enumerate(flags)]
