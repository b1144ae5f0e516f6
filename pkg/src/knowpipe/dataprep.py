"""Turn the labeled pool into scorer training data."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .core import KnowledgeRecord, Question, _atomic_write_lines
from .errors import PrepError
from .prompts import question_with_options


@dataclass(frozen=True)
class TrainTriple:
    qid: str
    kid: str
    question_text: str
    knowledge_text: str
    y: int

    def __post_init__(self) -> None:
        if self.y not in (0, 1):
            raise PrepError(f"label must be 0 or 1, got {self.y}")
        if not self.question_text:
            raise PrepError(f"triple for {self.qid!r} has empty question text")


def prepare_training_set(
    pool: Sequence[KnowledgeRecord],
    questions: Mapping[str, Question],
    split: tuple[float, float] = (0.9, 0.1),
    seed: int = 0,
) -> tuple[list[TrainTriple], list[TrainTriple]]:
    """Build train/val triples from a labeled pool.

    Questions whose knowledge is single-polarity are dropped entirely; the
    split is by question id so no question's knowledge straddles train and
    val. Both splits must end up with both labels.
    """
    train_fraction, val_fraction = split
    if train_fraction <= 0 or val_fraction <= 0 or train_fraction + val_fraction > 1.0 + 1e-9:
        raise PrepError(f"fractions must be positive and sum <= 1, got {split}")

    by_qid: dict[str, list[KnowledgeRecord]] = {}
    for record in pool:
        if record.level is None or record.label is None:
            raise PrepError(f"pool record {record.kid!r} is missing level/label")
        by_qid.setdefault(record.qid, []).append(record)

    mixed: dict[str, list[TrainTriple]] = {}
    for qid, records in by_qid.items():
        labels = {r.label for r in records}
        if labels != {"positive", "negative"}:
            continue
        q = questions.get(qid)
        if q is None:
            raise PrepError(f"pool references unknown question {qid!r}")
        question_text = question_with_options(q)
        mixed[qid] = [
            TrainTriple(
                qid=qid,
                kid=r.kid,
                question_text=question_text,
                knowledge_text=r.text,
                y=1 if r.label == "positive" else 0,
            )
            for r in records
        ]
    if not mixed:
        raise PrepError("no question kept both positive and negative knowledge")

    qids = sorted(mixed)
    rng = random.Random(seed)
    rng.shuffle(qids)
    n = len(qids)
    n_train = int(round(train_fraction * n))
    n_val = int(round(val_fraction * n))
    if n_train + n_val > n:
        n_train = n - n_val
    train_qids = qids[:n_train]
    val_qids = qids[n_train : n_train + n_val]

    train = [t for qid in train_qids for t in mixed[qid]]
    val = [t for qid in val_qids for t in mixed[qid]]
    for name, triples in (("train", train), ("val", val)):
        labels = {t.y for t in triples}
        if labels != {0, 1}:
            raise PrepError(f"degenerate split: {name} lacks both labels")
    return train, val


def export_training_set(triples: Sequence[TrainTriple], path: str | Path) -> None:
    """Write triples as JSONL, ordered by (qid, kid), overwriting atomically."""
    if not triples:
        raise PrepError("nothing to export: no training triples")
    ordered = sorted(triples, key=lambda t: (t.qid, t.kid))
    _atomic_write_lines(
        (
            json.dumps(
                {
                    "qid": t.qid,
                    "kid": t.kid,
                    "question": t.question_text,
                    "knowledge": t.knowledge_text,
                    "label": t.y,
                },
                sort_keys=True,
            )
            for t in ordered
        ),
        Path(path),
    )


def load_training_set(path: str | Path) -> list[TrainTriple]:
    triples: list[TrainTriple] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            triples.append(
                TrainTriple(
                    qid=d["qid"],
                    kid=d.get("kid", ""),
                    question_text=d["question"],
                    knowledge_text=d["knowledge"],
                    y=int(d["label"]),
                )
            )
    return triples
