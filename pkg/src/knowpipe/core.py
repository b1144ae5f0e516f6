"""Canonical data types, dataset ingestion, and stage-file persistence."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import ConfigError, DatasetError

LEVEL_USEFUL = 0
LEVEL_HARMLESS = 1
LEVEL_USELESS = 2
LEVEL_HARMFUL = 3

POSITIVE_LEVELS = (LEVEL_USEFUL, LEVEL_HARMLESS)


@dataclass(frozen=True)
class Question:
    """One multiple-choice item with its gold option index (0-based)."""

    id: str
    stem: str
    options: tuple[str, ...]
    gold: int
    dataset_tag: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "options", tuple(self.options))
        if len(self.options) < 2:
            raise DatasetError(f"question {self.id!r}: needs at least 2 options")
        if len(set(self.options)) != len(self.options):
            raise DatasetError(f"question {self.id!r}: options must be pairwise distinct")
        if not (0 <= self.gold < len(self.options)):
            raise DatasetError(
                f"question {self.id!r}: gold index {self.gold} out of range for "
                f"{len(self.options)} options"
            )

    @property
    def n_options(self) -> int:
        return len(self.options)


@dataclass(frozen=True)
class KnowledgeRecord:
    """One elicited knowledge piece, optionally leveled, labeled, and scored."""

    qid: str
    kid: str
    text: str
    sample_index: int
    gen_temperature: float
    level: int | None = None
    label: str | None = None
    score: float | None = None

    def __post_init__(self) -> None:
        if self.sample_index < 0:
            raise DatasetError(f"knowledge {self.kid!r}: negative sample_index")
        if self.level is not None and self.level not in (0, 1, 2, 3):
            raise DatasetError(f"knowledge {self.kid!r}: level must be 0..3, got {self.level}")
        if self.label is not None:
            if self.level is None:
                raise DatasetError(f"knowledge {self.kid!r}: label set without level")
            expected = "positive" if self.level in POSITIVE_LEVELS else "negative"
            if self.label != expected:
                raise DatasetError(
                    f"knowledge {self.kid!r}: label {self.label!r} inconsistent with "
                    f"level {self.level}"
                )
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise DatasetError(f"knowledge {self.kid!r}: score {self.score} outside [0,1]")

    def with_level(self, level: int) -> "KnowledgeRecord":
        """Return a copy with level set and the label derived from it."""
        label = "positive" if level in POSITIVE_LEVELS else "negative"
        return replace(self, level=level, label=label)

    def with_score(self, score: float) -> "KnowledgeRecord":
        return replace(self, score=score)

    @property
    def is_positive(self) -> bool:
        return self.label == "positive"


@dataclass(frozen=True)
class AnswerSample:
    """One parsed model answer attempt, with or without conditioning knowledge."""

    qid: str
    condition: str  # "direct" or "with_knowledge"
    rationale_ids: tuple[str, ...]
    raw_text: str
    parsed: int | None
    valid: bool
    tokens_in: int
    tokens_out: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "rationale_ids", tuple(self.rationale_ids))
        if self.condition not in ("direct", "with_knowledge"):
            raise DatasetError(f"answer for {self.qid!r}: bad condition {self.condition!r}")
        if self.condition == "direct" and self.rationale_ids:
            raise DatasetError(f"answer for {self.qid!r}: direct answers carry no rationale ids")
        if self.valid != (self.parsed is not None):
            raise DatasetError(f"answer for {self.qid!r}: valid flag inconsistent with parsed")
        if self.tokens_in < 0 or self.tokens_out < 0:
            raise DatasetError(f"answer for {self.qid!r}: negative token count")

    def is_correct(self, gold: int) -> bool:
        """Invalid samples count as wrong."""
        return self.valid and self.parsed == gold


@dataclass(frozen=True)
class RunConfig:
    """Sampling parameters and backend endpoints for one batch run."""

    knowledge_temperature: float = 1.3
    knowledge_samples: int = 5
    answer_temperature: float = 0.7
    answer_samples: int = 3
    top_k: int = 2
    llm_endpoint: str = "mock:"
    llm_model: str = "gpt-3.5-turbo-0613"
    scorer_endpoint: str | None = None
    cache_dir: str | None = None
    concurrency_limit: int = 4
    seed: int = 0

    def validate(self) -> "RunConfig":
        if self.knowledge_samples < 1:
            raise ConfigError("knowledge_samples must be >= 1")
        if self.answer_samples < 1:
            raise ConfigError("answer_samples must be >= 1")
        if not (1 <= self.top_k <= self.knowledge_samples):
            raise ConfigError(
                f"top_k must be in [1, knowledge_samples={self.knowledge_samples}], "
                f"got {self.top_k}"
            )
        if self.knowledge_temperature < 0 or self.answer_temperature < 0:
            raise ConfigError("temperatures must be >= 0")
        if self.concurrency_limit < 1:
            raise ConfigError("concurrency_limit must be >= 1")
        if not self.llm_endpoint:
            raise ConfigError("llm_endpoint must be set")
        return self


# ── JSON (de)serialization ──────────────────────────────────────────────

_OPTIONAL_FIELDS = {"level", "label", "score", "parsed"}


def record_to_dict(record: Any) -> dict[str, Any]:
    """Flatten a stage record to plain JSON types, null for unset optionals."""
    out: dict[str, Any] = {}
    for f in fields(record):
        value = getattr(record, f.name)
        if isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def knowledge_from_dict(d: dict[str, Any]) -> KnowledgeRecord:
    return KnowledgeRecord(
        qid=d["qid"],
        kid=d["kid"],
        text=d["text"],
        sample_index=d["sample_index"],
        gen_temperature=d["gen_temperature"],
        level=d.get("level"),
        label=d.get("label"),
        score=d.get("score"),
    )


def answer_from_dict(d: dict[str, Any]) -> AnswerSample:
    return AnswerSample(
        qid=d["qid"],
        condition=d["condition"],
        rationale_ids=tuple(d.get("rationale_ids") or ()),
        raw_text=d["raw_text"],
        parsed=d.get("parsed"),
        valid=d["valid"],
        tokens_in=d["tokens_in"],
        tokens_out=d["tokens_out"],
    )


# ── Dataset ingestion ───────────────────────────────────────────────────


def load_dataset(path: str | Path, format: str = "jsonl") -> list[Question]:
    """Load questions from a JSONL file, preserving file order.

    Each line is {"id", "question", "options", "answer"}; the answer index
    is 0-based. Duplicate ids and out-of-range answers are rejected with
    the offending line number.
    """
    if format != "jsonl":
        raise DatasetError(f"unsupported dataset format {format!r}")
    path = Path(path)
    tag = path.stem
    questions: list[Question] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            try:
                qid = obj["id"]
                stem = obj["question"]
                options = obj["options"]
                answer = obj["answer"]
            except KeyError as exc:
                raise DatasetError(f"missing key {exc.args[0]!r}", line=lineno) from exc
            if qid in seen:
                raise DatasetError(f"duplicate question id {qid!r}", line=lineno)
            seen.add(qid)
            try:
                questions.append(
                    Question(id=qid, stem=stem, options=tuple(options), gold=answer, dataset_tag=tag)
                )
            except DatasetError as exc:
                raise DatasetError(str(exc), line=lineno) from exc
    return questions


def index_questions(questions: Iterable[Question]) -> dict[str, Question]:
    return {q.id: q for q in questions}


# ── Stage persistence ───────────────────────────────────────────────────


def _atomic_write_lines(lines: Iterable[str], path: Path) -> None:
    """Write then rename so interrupted runs never leave partial files."""
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def persist_stage(records: Sequence[Any], path: str | Path) -> None:
    """Persist records as newline-delimited JSON, atomically, in input order."""
    path = Path(path)
    kinds = {type(r) for r in records}
    if len(kinds) > 1:
        raise DatasetError(f"records must share a schema, got {sorted(k.__name__ for k in kinds)}")
    _atomic_write_lines(
        (json.dumps(record_to_dict(r), sort_keys=True) for r in records), path
    )


def _load_jsonl(path: str | Path) -> list[dict[str, Any]]:
    rows: list[dict[str, Any]] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON: {exc.msg}", line=lineno) from exc
    return rows


def load_knowledge_records(path: str | Path) -> list[KnowledgeRecord]:
    return [knowledge_from_dict(d) for d in _load_jsonl(path)]


def load_answer_samples(path: str | Path) -> list[AnswerSample]:
    return [answer_from_dict(d) for d in _load_jsonl(path)]
