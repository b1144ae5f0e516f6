"""Answer-sampling strategies and marginal majority voting."""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .core import (
    AnswerSample,
    Question,
    RunConfig,
    _atomic_write_lines,
    answer_from_dict,
    record_to_dict,
)
from .errors import EvalError, ReasoningError
from .gateway import MAX_TOKENS, ChatRequest, Gateway
from .pool import parse_answer
from .prompts import TAG_DIRECT_ANSWER, TAG_KNOWLEDGE_ANSWER, TAG_KNOWLEDGE_GEN, render_prompt
from .scoring import ScoredKnowledge, select_rationale

STRATEGIES = ("few_shot", "cot", "cot_sc", "mcr", "oo", "om", "mo", "mm")

_KNOWLEDGE_STRATEGIES = ("mcr", "oo", "om", "mo", "mm")


@dataclass(frozen=True)
class ReasoningOutcome:
    qid: str
    strategy: str
    samples: tuple[AnswerSample, ...]
    vote_histogram: dict[int, int]
    final: int | None
    correct: bool
    tokens_total: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        valid = sum(1 for s in self.samples if s.valid)
        if sum(self.vote_histogram.values()) != valid:
            raise ReasoningError(f"{self.qid}: vote histogram does not cover valid samples")
        if (self.final is not None) != (valid > 0):
            raise ReasoningError(f"{self.qid}: final must be set iff some sample is valid")

    def to_dict(self) -> dict[str, Any]:
        return {
            "qid": self.qid,
            "strategy": self.strategy,
            "samples": [record_to_dict(s) for s in self.samples],
            "vote_histogram": {str(k): v for k, v in sorted(self.vote_histogram.items())},
            "final": self.final,
            "correct": self.correct,
            "tokens_total": self.tokens_total,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "ReasoningOutcome":
        return ReasoningOutcome(
            qid=d["qid"],
            strategy=d["strategy"],
            samples=tuple(answer_from_dict(s) for s in d["samples"]),
            vote_histogram={int(k): v for k, v in d["vote_histogram"].items()},
            final=d.get("final"),
            correct=d["correct"],
            tokens_total=d["tokens_total"],
        )


def majority_vote(samples: Sequence[AnswerSample]) -> int | None:
    """Most frequent valid option; ties go to the lowest index; all-invalid is None."""
    qids = {s.qid for s in samples}
    if len(qids) > 1:
        raise EvalError(f"majority_vote across questions: {sorted(qids)}")
    votes = [s.parsed for s in samples if s.valid]
    if not votes:
        return None
    counts = Counter(votes)
    best = max(counts.values())
    return min(option for option, count in counts.items() if count == best)


def _build_outcome(
    q: Question, strategy: str, samples: Sequence[AnswerSample], tokens_total: int
) -> ReasoningOutcome:
    histogram = Counter(s.parsed for s in samples if s.valid)
    final = majority_vote(samples)
    return ReasoningOutcome(
        qid=q.id,
        strategy=strategy,
        samples=tuple(samples),
        vote_histogram=dict(histogram),
        final=final,
        correct=final == q.gold,
        tokens_total=tokens_total,
    )


def _sample_answers(
    q: Question,
    knowledge: str | None,
    rationale_ids: Sequence[str],
    n: int,
    cfg: RunConfig,
    gateway: Gateway,
) -> list[AnswerSample]:
    """Issue one n-sample answer request; each sample keeps its own token cost."""
    tag = TAG_DIRECT_ANSWER if knowledge is None else TAG_KNOWLEDGE_ANSWER
    req = ChatRequest(
        messages=render_prompt(q, tag, knowledge),
        temperature=cfg.answer_temperature,
        n_samples=n,
        max_tokens=MAX_TOKENS[tag],
        tag=tag,
    )
    completions, _ = gateway.complete_at(req, range(n), q)
    samples = []
    for c in completions:
        parsed = parse_answer(c.text, q.options)
        samples.append(
            AnswerSample(
                qid=q.id,
                condition="direct" if knowledge is None else "with_knowledge",
                rationale_ids=tuple(rationale_ids),
                raw_text=c.text,
                parsed=parsed,
                valid=parsed is not None,
                tokens_in=c.tokens_in,
                tokens_out=c.tokens_out,
            )
        )
    return samples


def _generate_rationales(q: Question, n: int, cfg: RunConfig, gateway: Gateway) -> tuple[list[str], int]:
    """Sample n fresh rationale texts for chain-style strategies."""
    req = ChatRequest(
        messages=render_prompt(q, TAG_KNOWLEDGE_GEN),
        temperature=cfg.answer_temperature,
        n_samples=n,
        max_tokens=MAX_TOKENS[TAG_KNOWLEDGE_GEN],
        tag=TAG_KNOWLEDGE_GEN,
    )
    resp = gateway.complete(req, q)
    return list(resp.completions), resp.tokens_in + resp.tokens_out


def _tokens(samples: Sequence[AnswerSample]) -> int:
    return sum(s.tokens_in + s.tokens_out for s in samples)


def mcr(
    q: Question, scored: Sequence[ScoredKnowledge], cfg: RunConfig, gateway: Gateway
) -> ReasoningOutcome:
    """Sample several answers conditioned on one fixed top-k rationale, then vote.

    Every sample cites the same rationale ids, so the vote estimates the
    answer distribution under a single fixed condition.
    """
    if not scored:
        raise ReasoningError(f"no scored knowledge for question {q.id!r}")
    rationale, kids = select_rationale(scored, cfg.top_k)
    samples = _sample_answers(q, rationale, kids, cfg.answer_samples, cfg, gateway)
    return _build_outcome(q, "mcr", samples, _tokens(samples))


def run_strategy(
    q: Question,
    scored: Sequence[ScoredKnowledge] | None,
    cfg: RunConfig,
    gateway: Gateway,
    strategy: str,
) -> ReasoningOutcome:
    """Run one question under one sampling strategy.

    few_shot answers directly; cot/cot_sc sample whole fresh chains; the
    two-letter strategies combine one-vs-many rationales with one-vs-many
    answers, drawing extra rationales by descending rank.
    """
    if strategy not in STRATEGIES:
        raise ReasoningError(f"unknown strategy {strategy!r}")
    n = cfg.answer_samples

    if strategy == "few_shot":
        samples = _sample_answers(q, None, (), 1, cfg, gateway)
        return _build_outcome(q, strategy, samples, _tokens(samples))

    if strategy in ("cot", "cot_sc"):
        n_chains = 1 if strategy == "cot" else n
        rationales, gen_tokens = _generate_rationales(q, n_chains, cfg, gateway)
        samples = []
        for rationale in rationales:
            samples.extend(_sample_answers(q, rationale, (), 1, cfg, gateway))
        return _build_outcome(q, strategy, samples, gen_tokens + _tokens(samples))

    if scored is None or not scored:
        raise ReasoningError(f"strategy {strategy!r} needs scored knowledge for {q.id!r}")

    if strategy in ("oo", "om", "mcr"):
        rationale, kids = select_rationale(scored, cfg.top_k)
        n_answers = 1 if strategy == "oo" else n
        samples = _sample_answers(q, rationale, kids, n_answers, cfg, gateway)
        return _build_outcome(q, strategy, samples, _tokens(samples))

    # mo / mm: one single-piece rationale per slot, ranks 1..n, recycled.
    by_rank = sorted(scored, key=lambda s: s.rank)
    slots = [by_rank[i % len(by_rank)] for i in range(n)]
    samples = []
    per_rationale = 1 if strategy == "mo" else n
    for slot in slots:
        samples.extend(
            _sample_answers(q, slot.record.text, (slot.record.kid,), per_rationale, cfg, gateway)
        )
    return _build_outcome(q, strategy, samples, _tokens(samples))


def run_dataset(
    questions: Sequence[Question],
    scored_by_qid: Mapping[str, Sequence[ScoredKnowledge]] | None,
    cfg: RunConfig,
    gateway: Gateway,
    strategy: str,
) -> list[ReasoningOutcome]:
    """Run a strategy over a dataset concurrently, keeping dataset order."""
    def one(q: Question) -> ReasoningOutcome:
        scored = scored_by_qid.get(q.id) if scored_by_qid is not None else None
        return run_strategy(q, scored, cfg, gateway, strategy)

    with ThreadPoolExecutor(max_workers=cfg.concurrency_limit) as pool:
        return list(pool.map(one, questions))


def persist_outcomes(outcomes: Sequence[ReasoningOutcome], path: str | Path) -> None:
    _atomic_write_lines(
        (json.dumps(o.to_dict(), sort_keys=True) for o in outcomes), Path(path)
    )


def load_outcomes(path: str | Path) -> list[ReasoningOutcome]:
    outcomes = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                outcomes.append(ReasoningOutcome.from_dict(json.loads(line)))
    return outcomes
