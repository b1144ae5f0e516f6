"""Shared fixtures and test backends."""

from __future__ import annotations

import pytest

from knowpipe.core import Question, RunConfig
from knowpipe.gateway import Gateway, SampleCompletion
from knowpipe.mockworld import MockChatBackend, MockWorldSpec


@pytest.fixture
def tiny_questions() -> list[Question]:
    return [
        Question(
            id="w1",
            stem=(
                "The house on the hill needed some work on the floors but not "
                "the cabinets as the _ were ancient."
            ),
            options=("floors", "cabinets", "None"),
            gold=0,
            dataset_tag="toy",
        ),
        Question(
            id="w2",
            stem="The woman wanted to put her hand inside the glove but the _ was too large.",
            options=("hand", "glove", "None"),
            gold=0,
            dataset_tag="toy",
        ),
        Question(
            id="w3",
            stem="Maria stretched out a hand and then _ accepted the handshake.",
            options=("Maria", "Katrina"),
            gold=1,
            dataset_tag="toy",
        ),
    ]


@pytest.fixture
def mock_cfg() -> RunConfig:
    return RunConfig(concurrency_limit=2, seed=3).validate()


def make_gateway(world: MockWorldSpec, cache=None, concurrency: int = 2) -> Gateway:
    return Gateway(backend=MockChatBackend(world), cache=cache, concurrency_limit=concurrency)


class CountingBackend:
    """Wraps a backend, recording (tag, indexes, qid) per call."""

    def __init__(self, inner):
        self.inner = inner
        self.model_id = inner.model_id
        self.calls: list[tuple[str, tuple[int, ...], str | None]] = []

    def complete_samples(self, req, sample_indexes, question):
        self.calls.append((req.tag, tuple(sample_indexes), question.id if question else None))
        return self.inner.complete_samples(req, sample_indexes, question)

    def calls_by_tag(self, tag: str) -> list[tuple[str, tuple[int, ...], str | None]]:
        return [c for c in self.calls if c[0] == tag]


class ScriptedBackend:
    """Returns canned completion texts keyed by request tag."""

    model_id = "scripted"

    def __init__(self, by_tag: dict[str, list[str]]):
        self.by_tag = {tag: list(texts) for tag, texts in by_tag.items()}

    def complete_samples(self, req, sample_indexes, question):
        out = []
        for _ in sample_indexes:
            queue = self.by_tag.get(req.tag, [])
            text = queue.pop(0) if queue else ""
            out.append(SampleCompletion(text, 10, max(1, len(text.split()))))
        return out
