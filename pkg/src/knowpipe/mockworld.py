"""Deterministic mock chat backend for offline, desk-scale verification."""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass
from typing import Sequence

from .core import KnowledgeRecord, Question
from .errors import ScorerError
from .gateway import ChatRequest, ChatResponse, SampleCompletion
from .prompts import TAG_DIRECT_ANSWER, TAG_KNOWLEDGE_ANSWER, TAG_KNOWLEDGE_GEN

_MARKER_RE = re.compile(r"Mock fact \S+ \(([+-])\)")


@dataclass(frozen=True)
class MockWorldSpec:
    """Ground truth controlling answer correctness in the mock world.

    p0 is the chance a direct answer is right; p_pos / p_neg the chance a
    knowledge-conditioned answer is right given helpful / misleading
    knowledge; positive_rate the chance each generated piece is helpful.
    """

    p0: float = 0.4
    p_pos: float = 0.9
    p_neg: float = 0.2
    positive_rate: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p0", "p_pos", "p_neg", "positive_rate"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must be in [0,1], got {value}")

    @property
    def model_id(self) -> str:
        return (
            f"mock-world(seed={self.seed},p0={self.p0},p_pos={self.p_pos},"
            f"p_neg={self.p_neg},positive_rate={self.positive_rate})"
        )


def planted_polarity(text: str) -> bool | None:
    """Recover the hidden polarity of a mock knowledge string, if any.

    For concatenated rationales the first (top-ranked) piece governs.
    """
    m = _MARKER_RE.search(text)
    if m is None:
        return None
    return m.group(1) == "+"


class MockChatBackend:
    """Emits answers and knowledge with world-specified correctness odds.

    All randomness derives from (world seed, qid, tag, sample index, prompt
    digest), so identical runs reproduce byte-identical outputs and distinct
    prompts draw independently.
    """

    def __init__(self, world: MockWorldSpec):
        self.world = world
        self.model_id = world.model_id

    def _rng(self, req: ChatRequest, qid: str, sample_index: int) -> random.Random:
        digest = hashlib.sha256(
            f"{self.world.seed}|{qid}|{req.tag}|{sample_index}|{req.rendered()}".encode("utf-8")
        ).hexdigest()
        return random.Random(int(digest[:16], 16))

    def complete_samples(
        self, req: ChatRequest, sample_indexes: Sequence[int], question: Question | None
    ) -> list[SampleCompletion]:
        if question is None:
            raise ValueError("mock backend needs the target question")
        tokens_in = sum(len(content.split()) for _, content in req.messages)
        out: list[SampleCompletion] = []
        for i in sample_indexes:
            rng = self._rng(req, question.id, i)
            if req.tag == TAG_KNOWLEDGE_GEN:
                text = self._knowledge(question, i, rng)
            else:
                text = self._answer(req, question, rng)
            out.append(SampleCompletion(text, tokens_in, len(text.split())))
        return out

    def _knowledge(self, q: Question, sample_index: int, rng: random.Random) -> str:
        positive = rng.random() < self.world.positive_rate
        sign = "+" if positive else "-"
        lean = "supports" if positive else "undercuts"
        return (
            f"Mock fact {q.id}#{sample_index} ({sign}): everyday experience {lean} "
            "the outcome described in the question."
        )

    def _answer(self, req: ChatRequest, q: Question, rng: random.Random) -> str:
        if req.tag == TAG_DIRECT_ANSWER:
            p_correct = self.world.p0
        else:
            polarity = planted_polarity(req.messages[-1][1])
            if polarity is None:
                p_correct = self.world.p0
            elif polarity:
                p_correct = self.world.p_pos
            else:
                p_correct = self.world.p_neg
        if rng.random() < p_correct:
            choice = q.gold
        else:
            wrong = [i for i in range(q.n_options) if i != q.gold]
            choice = rng.choice(wrong)
        return f"Answer: ({choice + 1})"


def mock_complete(req: ChatRequest, world: MockWorldSpec, q: Question) -> ChatResponse:
    """One-shot mock completion without a gateway (no cache, no ledger)."""
    backend = MockChatBackend(world)
    samples = backend.complete_samples(req, list(range(req.n_samples)), q)
    return ChatResponse(
        completions=tuple(s.text for s in samples),
        tokens_in=sum(s.tokens_in for s in samples),
        tokens_out=sum(s.tokens_out for s in samples),
        cached=False,
    )


class PlantedPolarityScorer:
    """Scores mock knowledge by its hidden ground-truth polarity.

    Stands in for a perfectly trained scorer when pool labels are themselves
    noisy draws; only meaningful on mock-generated knowledge text.
    """

    name = "planted"

    def score(self, q: Question, records: Sequence[KnowledgeRecord]) -> list[float]:
        scores: list[float] = []
        for record in records:
            polarity = planted_polarity(record.text)
            if polarity is None:
                raise ScorerError(f"knowledge {record.kid!r} carries no planted polarity")
            scores.append(1.0 if polarity else 0.0)
        return scores


def make_synthetic_dataset(
    n_questions: int, n_options: int = 3, seed: int = 0, tag: str = "mockbench"
) -> list[Question]:
    """Generate a deterministic placeholder dataset for offline runs."""
    rng = random.Random(seed)
    questions = []
    for i in range(n_questions):
        options = tuple(f"choice-{i}-{j}" for j in range(n_options))
        questions.append(
            Question(
                id=f"{tag}-{i:05d}",
                stem=f"Synthetic scenario {i}: which choice completes the blank _?",
                options=options,
                gold=rng.randrange(n_options),
                dataset_tag=tag,
            )
        )
    return questions


def dataset_to_jsonl_rows(questions: Sequence[Question]) -> list[dict]:
    return [
        {"id": q.id, "question": q.stem, "options": list(q.options), "answer": q.gold}
        for q in questions
    ]
