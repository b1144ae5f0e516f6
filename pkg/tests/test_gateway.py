import pytest

from conftest import make_gateway
from knowpipe.core import Question
from knowpipe.errors import GatewayError
from knowpipe.gateway import ChatRequest, Gateway, ResponseCache, SampleCompletion
from knowpipe.mockworld import MockChatBackend, MockWorldSpec
from knowpipe.prompts import TAG_DIRECT_ANSWER, TAG_KNOWLEDGE_GEN, render_prompt


@pytest.fixture
def q():
    return Question(id="g1", stem="Test stem _", options=("a", "b"), gold=0)


def knowledge_request(q, n=5):
    return ChatRequest(
        messages=render_prompt(q, TAG_KNOWLEDGE_GEN),
        temperature=1.3,
        n_samples=n,
        max_tokens=256,
        tag=TAG_KNOWLEDGE_GEN,
    )


class TestChatRequest:
    def test_empty_messages(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=(), temperature=0.7, n_samples=1, max_tokens=64,
                        tag=TAG_DIRECT_ANSWER)

    def test_first_role(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=(("assistant", "hi"),), temperature=0.7, n_samples=1,
                        max_tokens=64, tag=TAG_DIRECT_ANSWER)

    def test_n_samples_positive(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=(("user", "hi"),), temperature=0.7, n_samples=0,
                        max_tokens=64, tag=TAG_DIRECT_ANSWER)

    def test_unknown_tag(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=(("user", "hi"),), temperature=0.7, n_samples=1,
                        max_tokens=64, tag="chitchat")


class TestCompletion:
    def test_mock_determinism(self, q):
        gw = make_gateway(MockWorldSpec(seed=5))
        req = knowledge_request(q)
        first = gw.complete(req, q)
        second = gw.complete(req, q)
        assert first.completions == second.completions

    def test_n_samples_count(self, q):
        gw = make_gateway(MockWorldSpec(seed=5))
        resp = gw.complete(knowledge_request(q, n=5), q)
        assert len(resp.completions) == 5
        assert len(set(resp.completions)) == 5  # distinct sample indexes differ

    def test_token_counts_nonnegative(self, q):
        gw = make_gateway(MockWorldSpec(seed=5))
        resp = gw.complete(knowledge_request(q, n=2), q)
        assert resp.tokens_in > 0 and resp.tokens_out > 0

    def test_backend_length_mismatch(self, q):
        class ShortBackend:
            model_id = "short"

            def complete_samples(self, req, idxs, question):
                return [SampleCompletion("x", 1, 1)]

        gw = Gateway(backend=ShortBackend())
        with pytest.raises(GatewayError, match="completions"):
            gw.complete(knowledge_request(q, n=3), q)


class TestCache:
    def test_warm_hit_returns_same_bytes(self, q, tmp_path):
        cache = ResponseCache(tmp_path / "cache")
        gw = make_gateway(MockWorldSpec(seed=5), cache=cache)
        req = knowledge_request(q, n=3)
        cold = gw.complete(req, q)
        warm = gw.complete(req, q)
        assert not cold.cached
        assert warm.cached
        assert warm.completions == cold.completions
        assert (warm.tokens_in, warm.tokens_out) == (cold.tokens_in, cold.tokens_out)

    def test_ledger_counts_only_fresh(self, q, tmp_path):
        cache = ResponseCache(tmp_path / "cache")
        gw = make_gateway(MockWorldSpec(seed=5), cache=cache)
        req = knowledge_request(q, n=3)
        cold = gw.complete(req, q)
        after_cold = gw.ledger.snapshot()
        gw.complete(req, q)
        after_warm = gw.ledger.snapshot()
        assert after_cold[:2] == after_warm[:2], "cached samples add nothing to the ledger"
        assert gw.ledger.total == cold.tokens_in + cold.tokens_out
        assert gw.ledger.cached_samples == 3

    def test_partial_miss_fills_gaps(self, q, tmp_path):
        cache = ResponseCache(tmp_path / "cache")
        gw = make_gateway(MockWorldSpec(seed=5), cache=cache)
        small = knowledge_request(q, n=2)
        big = knowledge_request(q, n=4)
        first = gw.complete(small, q)
        second = gw.complete(big, q)
        assert second.completions[:2] == first.completions
        assert not second.cached  # two of four were fresh

    def test_cache_soundness_same_downstream(self, q, tmp_path):
        # A warm rerun must reproduce the cold run's samples exactly.
        cache_dir = tmp_path / "cache"
        req = knowledge_request(q, n=4)
        gw_cold = make_gateway(MockWorldSpec(seed=9), cache=ResponseCache(cache_dir))
        cold = gw_cold.complete(req, q)
        gw_warm = make_gateway(MockWorldSpec(seed=9), cache=ResponseCache(cache_dir))
        warm = gw_warm.complete(req, q)
        assert warm.completions == cold.completions

    def test_key_depends_on_temperature_and_model(self, q):
        req_a = knowledge_request(q)
        req_b = ChatRequest(messages=req_a.messages, temperature=0.1, n_samples=5,
                            max_tokens=256, tag=TAG_KNOWLEDGE_GEN)
        assert ResponseCache.key(req_a, 0, "m") != ResponseCache.key(req_b, 0, "m")
        assert ResponseCache.key(req_a, 0, "m") != ResponseCache.key(req_a, 0, "m2")
        assert ResponseCache.key(req_a, 0, "m") != ResponseCache.key(req_a, 1, "m")


class TestLedgerAdditivity:
    def test_totals_equal_sum_of_fresh_responses(self, q):
        gw = make_gateway(MockWorldSpec(seed=5))
        spent = 0
        for n in (1, 3, 2):
            resp = gw.complete(knowledge_request(q, n=n), q)
            spent += resp.tokens_in + resp.tokens_out
        assert gw.ledger.total == spent
        assert gw.ledger.fresh_samples == 6
