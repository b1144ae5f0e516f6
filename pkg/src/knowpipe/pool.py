"""Knowledge pool construction: elicit, answer with/without, assign levels."""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

from .core import (
    LEVEL_HARMFUL,
    LEVEL_HARMLESS,
    LEVEL_USEFUL,
    LEVEL_USELESS,
    AnswerSample,
    KnowledgeRecord,
    Question,
    RunConfig,
    persist_stage,
)
from .errors import ElicitationError, KnowpipeError
from .gateway import MAX_TOKENS, ChatRequest, Gateway
from .prompts import TAG_DIRECT_ANSWER, TAG_KNOWLEDGE_ANSWER, TAG_KNOWLEDGE_GEN, render_prompt

log = logging.getLogger(__name__)

_ANSWER_RE = re.compile(r"[Aa]nswer(?:\s+is)?\s*[:\-]?\s*\(?(\d+)\)?")
_LEADING_OPTION_RE = re.compile(r"^\s*\(?(\d+)\)?[.):\s]")


def parse_answer(raw: str, options: Sequence[str]) -> int | None:
    """Extract a 0-based option index from a model completion.

    Prefers the last "Answer ... <n>" occurrence, then a lone leading option
    number, then a final line naming exactly one option verbatim.
    """
    n_options = len(options)

    matches = _ANSWER_RE.findall(raw)
    if matches:
        idx = int(matches[-1]) - 1
        if 0 <= idx < n_options:
            return idx
    else:
        m = _LEADING_OPTION_RE.match(raw + " ")
        if m:
            idx = int(m.group(1)) - 1
            if 0 <= idx < n_options:
                return idx

    lines = [line for line in raw.splitlines() if line.strip()]
    if lines:
        final = lines[-1]
        named = [i for i, text in enumerate(options) if text and text in final]
        if len(named) == 1:
            return named[0]
    return None


def answer(
    q: Question,
    knowledge: str | None,
    cfg: RunConfig,
    gateway: Gateway,
    rationale_ids: Sequence[str] = (),
) -> AnswerSample:
    """Sample one answer, with or without conditioning knowledge."""
    tag = TAG_DIRECT_ANSWER if knowledge is None else TAG_KNOWLEDGE_ANSWER
    req = ChatRequest(
        messages=render_prompt(q, tag, knowledge),
        temperature=cfg.answer_temperature,
        n_samples=1,
        max_tokens=MAX_TOKENS[tag],
        tag=tag,
    )
    resp = gateway.complete(req, q)
    raw = resp.completions[0]
    parsed = parse_answer(raw, q.options)
    return AnswerSample(
        qid=q.id,
        condition="direct" if knowledge is None else "with_knowledge",
        rationale_ids=tuple(rationale_ids),
        raw_text=raw,
        parsed=parsed,
        valid=parsed is not None,
        tokens_in=resp.tokens_in,
        tokens_out=resp.tokens_out,
    )


def elicit_knowledge(q: Question, cfg: RunConfig, gateway: Gateway) -> list[KnowledgeRecord]:
    """Sample cfg.knowledge_samples knowledge pieces for one question.

    Empty completions get one regeneration (at a fresh sample index, so the
    retry is never served from cache); pieces still empty are dropped.
    """
    req = ChatRequest(
        messages=render_prompt(q, TAG_KNOWLEDGE_GEN),
        temperature=cfg.knowledge_temperature,
        n_samples=cfg.knowledge_samples,
        max_tokens=MAX_TOKENS[TAG_KNOWLEDGE_GEN],
        tag=TAG_KNOWLEDGE_GEN,
    )
    resp = gateway.complete(req, q)
    texts = list(resp.completions)

    records: list[KnowledgeRecord] = []
    for i, text in enumerate(texts):
        if not text.strip():
            retried, _ = gateway.complete_at(req, [cfg.knowledge_samples + i], q)
            text = retried[0].text
            if not text.strip():
                log.warning("dropping empty knowledge sample %d for %s", i, q.id)
                continue
        records.append(
            KnowledgeRecord(
                qid=q.id,
                kid=f"{q.id}-k{i}",
                text=text,
                sample_index=i,
                gen_temperature=cfg.knowledge_temperature,
            )
        )
    if not records:
        raise ElicitationError(f"no usable knowledge for question {q.id!r}")
    return records


def assign_level(direct: AnswerSample, with_k: AnswerSample, gold: int) -> int:
    """Map (direct, conditioned) correctness to the four-level taxonomy.

    Invalid samples count as wrong; the four cases partition the outcome
    space exactly.
    """
    if direct.qid != with_k.qid:
        raise KnowpipeError(f"qid mismatch: {direct.qid!r} vs {with_k.qid!r}")
    if direct.condition != "direct" or with_k.condition != "with_knowledge":
        raise KnowpipeError("assign_level expects one direct and one conditioned sample")
    direct_ok = direct.is_correct(gold)
    with_ok = with_k.is_correct(gold)
    if not direct_ok and with_ok:
        return LEVEL_USEFUL
    if direct_ok and with_ok:
        return LEVEL_HARMLESS
    if not direct_ok and not with_ok:
        return LEVEL_USELESS
    return LEVEL_HARMFUL


def label_records(
    q: Question,
    records: Sequence[KnowledgeRecord],
    cfg: RunConfig,
    gateway: Gateway,
) -> tuple[list[KnowledgeRecord], list[AnswerSample]]:
    """Level and label one question's knowledge against a shared direct answer.

    The direct answer is sampled exactly once and reused across all of the
    question's knowledge pieces.
    """
    direct = answer(q, None, cfg, gateway)
    samples = [direct]
    labeled: list[KnowledgeRecord] = []
    for record in records:
        conditioned = answer(q, record.text, cfg, gateway, rationale_ids=(record.kid,))
        samples.append(conditioned)
        labeled.append(record.with_level(assign_level(direct, conditioned, q.gold)))
    return labeled, samples


def elicit_pool(
    questions: Sequence[Question], cfg: RunConfig, gateway: Gateway
) -> list[KnowledgeRecord]:
    """Elicit unlabeled knowledge for every question, skipping failures."""
    def one(q: Question) -> list[KnowledgeRecord]:
        try:
            return elicit_knowledge(q, cfg, gateway)
        except ElicitationError as exc:
            log.warning("skipping %s: %s", q.id, exc)
            return []

    with ThreadPoolExecutor(max_workers=cfg.concurrency_limit) as pool:
        results = list(pool.map(one, questions))
    return [record for records in results for record in records]


def label_pool(
    questions: Sequence[Question],
    records: Sequence[KnowledgeRecord],
    cfg: RunConfig,
    gateway: Gateway,
) -> tuple[list[KnowledgeRecord], list[AnswerSample]]:
    """Level and label an elicited pool; dataset order, one task per question."""
    by_qid: dict[str, list[KnowledgeRecord]] = {}
    for record in records:
        by_qid.setdefault(record.qid, []).append(record)

    def one(q: Question) -> tuple[list[KnowledgeRecord], list[AnswerSample]]:
        mine = by_qid.get(q.id)
        if not mine:
            return [], []
        return label_records(q, mine, cfg, gateway)

    with ThreadPoolExecutor(max_workers=cfg.concurrency_limit) as pool:
        results = list(pool.map(one, questions))

    labeled: list[KnowledgeRecord] = []
    samples: list[AnswerSample] = []
    for recs, ss in results:
        labeled.extend(recs)
        samples.extend(ss)
    return labeled, samples


def build_pool(
    questions: Sequence[Question],
    cfg: RunConfig,
    gateway: Gateway,
    out_dir: str | Path | None = None,
) -> list[KnowledgeRecord]:
    """Elicit, answer, and label knowledge for every question.

    Questions run concurrently up to cfg.concurrency_limit; output keeps
    dataset order. Per-question elicitation failures are logged and skipped.
    """
    if not questions:
        raise KnowpipeError("build_pool needs at least one question")

    def one(q: Question) -> tuple[list[KnowledgeRecord], list[AnswerSample]] | None:
        try:
            records = elicit_knowledge(q, cfg, gateway)
        except ElicitationError as exc:
            log.warning("skipping %s: %s", q.id, exc)
            return None
        return label_records(q, records, cfg, gateway)

    with ThreadPoolExecutor(max_workers=cfg.concurrency_limit) as pool:
        results = list(pool.map(one, questions))

    labeled: list[KnowledgeRecord] = []
    samples: list[AnswerSample] = []
    for result in results:
        if result is None:
            continue
        labeled.extend(result[0])
        samples.extend(result[1])

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        persist_stage(labeled, out_dir / "pool.jsonl")
        persist_stage(samples, out_dir / "pool_answers.jsonl")
    return labeled
