import math

import pytest

from conftest import make_gateway
from knowpipe.core import Question
from knowpipe.errors import ScorerError
from knowpipe.gateway import ChatRequest
from knowpipe.mockworld import (
    MockWorldSpec,
    PlantedPolarityScorer,
    make_synthetic_dataset,
    mock_complete,
    planted_polarity,
)
from knowpipe.pool import elicit_knowledge, parse_answer
from knowpipe.prompts import TAG_DIRECT_ANSWER, TAG_KNOWLEDGE_ANSWER, render_prompt


@pytest.fixture
def q():
    return Question(id="m1", stem="Mock stem _", options=("a", "b", "c"), gold=1)


def direct_request(q, n=1):
    return ChatRequest(
        messages=render_prompt(q, TAG_DIRECT_ANSWER),
        temperature=0.7,
        n_samples=n,
        max_tokens=64,
        tag=TAG_DIRECT_ANSWER,
    )


def test_degenerate_p0_always_gold(q):
    world = MockWorldSpec(p0=1.0, seed=1)
    resp = mock_complete(direct_request(q, n=20), world, q)
    assert all(c == f"Answer: ({q.gold + 1})" for c in resp.completions)


def test_p0_zero_never_gold(q):
    world = MockWorldSpec(p0=0.0, seed=1)
    resp = mock_complete(direct_request(q, n=20), world, q)
    assert all(parse_answer(c, q.options) != q.gold for c in resp.completions)


def test_same_seed_identical_sequence(q):
    world = MockWorldSpec(p0=0.6, seed=42)
    a = mock_complete(direct_request(q, n=10), world, q)
    b = mock_complete(direct_request(q, n=10), world, q)
    assert a.completions == b.completions


def test_different_seed_differs(q):
    a = mock_complete(direct_request(q, n=10), MockWorldSpec(p0=0.6, seed=1), q)
    b = mock_complete(direct_request(q, n=10), MockWorldSpec(p0=0.6, seed=2), q)
    assert a.completions != b.completions


def test_p_pos_rate_law_of_large_numbers(q):
    # Empirical correct rate over 10000 conditioned samples: 0.9 within 0.01
    # (binomial std ~0.003).
    world = MockWorldSpec(p_pos=0.9, positive_rate=1.0, seed=7)
    knowledge = "Mock fact m1#0 (+): everyday experience supports the outcome described."
    req = ChatRequest(
        messages=render_prompt(q, TAG_KNOWLEDGE_ANSWER, knowledge),
        temperature=0.7,
        n_samples=10_000,
        max_tokens=64,
        tag=TAG_KNOWLEDGE_ANSWER,
    )
    resp = mock_complete(req, world, q)
    rate = sum(parse_answer(c, q.options) == q.gold for c in resp.completions) / 10_000
    assert math.isclose(rate, 0.9, abs_tol=0.01)


def test_negative_knowledge_uses_p_neg(q):
    world = MockWorldSpec(p_neg=0.0, seed=7)
    knowledge = "Mock fact m1#0 (-): everyday experience undercuts the outcome described."
    req = ChatRequest(
        messages=render_prompt(q, TAG_KNOWLEDGE_ANSWER, knowledge),
        temperature=0.7,
        n_samples=30,
        max_tokens=64,
        tag=TAG_KNOWLEDGE_ANSWER,
    )
    resp = mock_complete(req, world, q)
    assert all(parse_answer(c, q.options) != q.gold for c in resp.completions)


def test_planted_polarity_parsing():
    assert planted_polarity("Mock fact x#1 (+): blah") is True
    assert planted_polarity("Mock fact x#1 (-): blah") is False
    assert planted_polarity("ordinary text") is None
    # first marker governs concatenated rationales
    combined = "Mock fact x#1 (-): a\nMock fact x#2 (+): b"
    assert planted_polarity(combined) is False


def test_positive_rate_controls_polarity_mix(q, mock_cfg):
    world = MockWorldSpec(positive_rate=1.0, seed=3)
    gw = make_gateway(world)
    records = elicit_knowledge(q, mock_cfg, gw)
    assert all(planted_polarity(r.text) is True for r in records)


def test_planted_scorer(q, mock_cfg):
    world = MockWorldSpec(positive_rate=0.5, seed=12)
    records = elicit_knowledge(q, mock_cfg, make_gateway(world))
    scores = PlantedPolarityScorer().score(q, records)
    assert all(s in (0.0, 1.0) for s in scores)
    for record, score in zip(records, scores):
        assert (score == 1.0) == (planted_polarity(record.text) is True)


def test_planted_scorer_rejects_plain_text(q):
    from knowpipe.core import KnowledgeRecord

    rec = KnowledgeRecord(qid=q.id, kid="k", text="no marker here", sample_index=0,
                          gen_temperature=1.3)
    with pytest.raises(ScorerError):
        PlantedPolarityScorer().score(q, [rec])


def test_world_validation():
    with pytest.raises(ValueError):
        MockWorldSpec(p0=1.5)


def test_make_synthetic_dataset_deterministic():
    a = make_synthetic_dataset(10, 3, seed=4)
    b = make_synthetic_dataset(10, 3, seed=4)
    assert a == b
    assert all(0 <= q.gold < 3 for q in a)
    assert len({q.id for q in a}) == 10
