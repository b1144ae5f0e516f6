"""Knowledge scoring backends, ranking, and top-k rationale assembly."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import requests

from .core import KnowledgeRecord, Question
from .errors import ScorerError
from .prompts import question_with_options


@dataclass(frozen=True)
class ScoredKnowledge:
    """A scored record plus its 1-based rank within its question."""

    record: KnowledgeRecord
    rank: int

    def __post_init__(self) -> None:
        if self.record.score is None:
            raise ScorerError(f"knowledge {self.record.kid!r} has no score")
        if self.rank < 1:
            raise ScorerError(f"rank must be 1-based, got {self.rank}")


class Scorer(Protocol):
    name: str

    def score(self, q: Question, records: Sequence[KnowledgeRecord]) -> list[float]:
        ...


class OracleScorer:
    """Test double standing in for a trained scorer: 1.0 positive, 0.0 negative."""

    name = "oracle"

    def score(self, q: Question, records: Sequence[KnowledgeRecord]) -> list[float]:
        scores: list[float] = []
        for record in records:
            if record.label is None:
                raise ScorerError(f"oracle scorer needs labeled records, {record.kid!r} is unlabeled")
            scores.append(1.0 if record.label == "positive" else 0.0)
        return scores


def oracle_scorer(record: KnowledgeRecord) -> float:
    if record.label is None:
        raise ScorerError(f"oracle scorer needs labeled records, {record.kid!r} is unlabeled")
    return 1.0 if record.label == "positive" else 0.0


class ConstantScorer:
    """Gives every piece the same score; ranking falls to the kid tie-break."""

    name = "constant"

    def __init__(self, value: float = 0.5):
        if not (0.0 <= value <= 1.0):
            raise ScorerError(f"constant score must be in [0,1], got {value}")
        self.value = value

    def score(self, q: Question, records: Sequence[KnowledgeRecord]) -> list[float]:
        return [self.value] * len(records)


class RemoteScorer:
    """Client for the scoring service: POST /score over question/knowledge pairs."""

    name = "remote"

    def __init__(self, endpoint: str, timeout: float = 60.0, session: requests.Session | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()

    def healthy(self) -> bool:
        try:
            resp = self._session.get(f"{self.endpoint}/healthz", timeout=self.timeout)
        except requests.RequestException:
            return False
        return resp.status_code == 200

    def score(self, q: Question, records: Sequence[KnowledgeRecord]) -> list[float]:
        question_text = question_with_options(q)
        body = {
            "pairs": [
                {"question": question_text, "knowledge": record.text} for record in records
            ]
        }
        try:
            resp = self._session.post(f"{self.endpoint}/score", json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ScorerError(f"scorer unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise ScorerError(f"scorer returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            scores = resp.json()["scores"]
        except (ValueError, KeyError) as exc:
            raise ScorerError(f"malformed scorer response: {exc!r}") from exc
        return [float(s) for s in scores]


def score_batch(
    q: Question, ks: Sequence[KnowledgeRecord], backend: Scorer
) -> list[ScoredKnowledge]:
    """Score one question's knowledge and rank it; input order is preserved.

    Ranks run 1..m with ties broken by higher score then lower kid.
    """
    if not ks:
        raise ScorerError(f"no knowledge to score for question {q.id!r}")
    for record in ks:
        if record.qid != q.id:
            raise ScorerError(f"record {record.kid!r} belongs to {record.qid!r}, not {q.id!r}")
    scores = backend.score(q, ks)
    if len(scores) != len(ks):
        raise ScorerError(f"scorer returned {len(scores)} scores for {len(ks)} pairs")
    for record, s in zip(ks, scores):
        if not (0.0 <= s <= 1.0):
            raise ScorerError(f"score {s} for {record.kid!r} outside [0,1]")

    scored = [record.with_score(s) for record, s in zip(ks, scores)]
    by_rank = sorted(range(len(scored)), key=lambda i: (-scored[i].score, scored[i].kid))
    rank_of = {i: rank for rank, i in enumerate(by_rank, start=1)}
    return [ScoredKnowledge(record=scored[i], rank=rank_of[i]) for i in range(len(scored))]


def score_pool(
    questions: Sequence[Question],
    records: Sequence[KnowledgeRecord],
    backend: Scorer,
) -> dict[str, list[ScoredKnowledge]]:
    """Score and rank every question's knowledge; questions without any are skipped."""
    by_qid: dict[str, list[KnowledgeRecord]] = {}
    for record in records:
        by_qid.setdefault(record.qid, []).append(record)
    scored: dict[str, list[ScoredKnowledge]] = {}
    for q in questions:
        mine = by_qid.get(q.id)
        if mine:
            scored[q.id] = score_batch(q, mine, backend)
    return scored


def select_rationale(scored: Sequence[ScoredKnowledge], top_k: int) -> tuple[str, list[str]]:
    """Concatenate the top-k pieces (rank order, newline-joined) into one rationale."""
    if top_k < 1:
        raise ScorerError(f"top_k must be >= 1, got {top_k}")
    if not scored:
        raise ScorerError("select_rationale needs at least one scored record")
    chosen = sorted(scored, key=lambda s: s.rank)[: min(top_k, len(scored))]
    text = "\n".join(s.record.text for s in chosen)
    return text, [s.record.kid for s in chosen]
