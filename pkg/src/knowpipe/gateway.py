"""Chat-completion backend abstraction: caching, retries, token accounting."""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

from .core import Question
from .errors import GatewayError
from .prompts import PROMPT_TAGS

API_KEY_ENV = "KNOWPIPE_API_KEY"
API_KEY_ENV_FALLBACK = "OPENAI_API_KEY"


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]
    temperature: float
    n_samples: int
    max_tokens: int
    tag: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(tuple(m) for m in self.messages))
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0][0] not in ("system", "user"):
            raise ValueError("first message role must be system or user")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.tag not in PROMPT_TAGS:
            raise ValueError(f"unknown request tag {self.tag!r}")

    def rendered(self) -> str:
        return "\n".join(f"{role}: {content}" for role, content in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    completions: tuple[str, ...]
    tokens_in: int
    tokens_out: int
    cached: bool


@dataclass(frozen=True)
class SampleCompletion:
    """One completion plus its token cost, accounted as a standalone request."""

    text: str
    tokens_in: int
    tokens_out: int


class ChatBackend(Protocol):
    model_id: str

    def complete_samples(
        self, req: ChatRequest, sample_indexes: Sequence[int], question: Question | None
    ) -> list[SampleCompletion]:
        """Return one completion per requested sample index, in order."""
        ...


# Defaults per prompt family; knowledge pieces run 1-3 sentences, answers one line.
MAX_TOKENS = {"knowledge_gen": 256, "direct_answer": 64, "knowledge_answer": 64}


class TokenLedger:
    """Thread-safe usage counters; cached samples never add to the totals."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.tokens_in = 0
        self.tokens_out = 0
        self.fresh_samples = 0
        self.cached_samples = 0

    def add_fresh(self, tokens_in: int, tokens_out: int) -> None:
        with self._lock:
            self.tokens_in += tokens_in
            self.tokens_out += tokens_out
            self.fresh_samples += 1

    def add_cached(self) -> None:
        with self._lock:
            self.cached_samples += 1

    @property
    def total(self) -> int:
        return self.tokens_in + self.tokens_out

    def snapshot(self) -> tuple[int, int, int, int]:
        with self._lock:
            return (self.tokens_in, self.tokens_out, self.fresh_samples, self.cached_samples)


class ResponseCache:
    """File-per-key completion cache: concurrent readers, atomic insertion."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(req: ChatRequest, sample_index: int, model_id: str) -> str:
        payload = json.dumps(
            {
                "messages": [list(m) for m in req.messages],
                "temperature": req.temperature,
                "sample_index": sample_index,
                "model": model_id,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> SampleCompletion | None:
        path = self._path(key)
        try:
            with path.open("r", encoding="utf-8") as fh:
                d = json.load(fh)
        except FileNotFoundError:
            return None
        return SampleCompletion(d["text"], d["tokens_in"], d["tokens_out"])

    def put(self, key: str, completion: SampleCompletion) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + f".{os.getpid()}.tmp")
        tmp.write_text(
            json.dumps(
                {
                    "text": completion.text,
                    "tokens_in": completion.tokens_in,
                    "tokens_out": completion.tokens_out,
                },
                sort_keys=True,
            ),
            encoding="utf-8",
        )
        os.replace(tmp, path)


@dataclass
class Gateway:
    """Front door for all completions: cache lookaside plus usage ledger."""

    backend: ChatBackend
    cache: ResponseCache | None = None
    concurrency_limit: int = 4
    ledger: TokenLedger = field(default_factory=TokenLedger)

    def __post_init__(self) -> None:
        self._slots = threading.Semaphore(self.concurrency_limit)

    def complete_at(
        self, req: ChatRequest, indexes: Sequence[int], question: Question | None = None
    ) -> tuple[list[SampleCompletion], bool]:
        """Fetch completions for explicit sample indexes; True if all cached."""
        found: dict[int, SampleCompletion] = {}
        missing: list[int] = []
        keys: dict[int, str] = {}
        for i in indexes:
            if self.cache is not None:
                keys[i] = self.cache.key(req, i, self.backend.model_id)
                hit = self.cache.get(keys[i])
                if hit is not None:
                    found[i] = hit
                    continue
            missing.append(i)

        if missing:
            with self._slots:
                fresh = self.backend.complete_samples(req, missing, question)
            if len(fresh) != len(missing):
                raise GatewayError(
                    f"backend returned {len(fresh)} completions for {len(missing)} samples"
                )
            for i, completion in zip(missing, fresh):
                found[i] = completion
                self.ledger.add_fresh(completion.tokens_in, completion.tokens_out)
                if self.cache is not None:
                    self.cache.put(keys[i], completion)
        for _ in range(len(indexes) - len(missing)):
            self.ledger.add_cached()
        return [found[i] for i in indexes], not missing

    def complete(self, req: ChatRequest, question: Question | None = None) -> ChatResponse:
        """Return n_samples completions, consulting the cache per sample index."""
        ordered, cached = self.complete_at(req, range(req.n_samples), question)
        return ChatResponse(
            completions=tuple(c.text for c in ordered),
            tokens_in=sum(c.tokens_in for c in ordered),
            tokens_out=sum(c.tokens_out for c in ordered),
            cached=cached,
        )


def complete(req: ChatRequest, gateway: Gateway, question: Question | None = None) -> ChatResponse:
    return gateway.complete(req, question)


# ── HTTP backend ────────────────────────────────────────────────────────

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class HttpChatBackend:
    """Client for the de-facto chat-completions HTTP shape.

    POSTs {model, messages, temperature, n, max_tokens} to
    <endpoint>/chat/completions; transient failures are retried with
    exponential backoff. Backends that reject n>1 are retried as parallel
    single-sample requests.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 60.0,
        sleep: Callable[[float], None] = time.sleep,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model_id = model
        self.api_key = api_key or os.getenv(API_KEY_ENV) or os.getenv(API_KEY_ENV_FALLBACK, "")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._sleep = sleep
        self._session = session or requests.Session()

    def complete_samples(
        self, req: ChatRequest, sample_indexes: Sequence[int], question: Question | None = None
    ) -> list[SampleCompletion]:
        n = len(sample_indexes)
        try:
            return self._request(req, n)
        except _NSamplesRejected:
            return [c for _ in sample_indexes for c in self._request(req, 1)]

    def _request(self, req: ChatRequest, n: int) -> list[SampleCompletion]:
        body = {
            "model": self.model_id,
            "messages": [{"role": role, "content": content} for role, content in req.messages],
            "temperature": req.temperature,
            "n": n,
            "max_tokens": req.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_error: str = ""
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = self._session.post(
                    f"{self.endpoint}/chat/completions",
                    json=body,
                    headers=headers,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = f"network error: {exc}"
                continue
            if resp.status_code in _RETRYABLE_STATUS:
                kind = "rate limit" if resp.status_code == 429 else "server error"
                last_error = f"{kind} (HTTP {resp.status_code})"
                continue
            if resp.status_code != 200:
                if n > 1:
                    # Some servers reject multi-sample requests outright.
                    raise _NSamplesRejected()
                raise GatewayError(f"backend rejected request: HTTP {resp.status_code}")
            return self._parse(resp, n)
        raise GatewayError(f"backend unreachable after {self.retries + 1} attempts: {last_error}")

    @staticmethod
    def _parse(resp: requests.Response, n: int) -> list[SampleCompletion]:
        try:
            payload = resp.json()
        except ValueError as exc:
            raise GatewayError(f"malformed backend response: not JSON ({exc})") from exc
        try:
            choices = payload["choices"]
            texts = [c["message"]["content"] for c in choices]
            usage = payload.get("usage", {})
            tokens_in = int(usage.get("prompt_tokens", 0))
            tokens_out = int(usage.get("completion_tokens", 0))
        except (KeyError, TypeError) as exc:
            raise GatewayError(f"malformed backend response: {exc!r}") from exc
        if len(texts) != n:
            raise GatewayError(f"backend returned {len(texts)} choices, expected {n}")
        # Attribute the prompt cost to every sample, as if sent separately.
        per_out = _split_even(tokens_out, n)
        return [
            SampleCompletion(text, tokens_in, out) for text, out in zip(texts, per_out)
        ]


class _NSamplesRejected(Exception):
    pass


def _split_even(total: int, n: int) -> list[int]:
    base, rem = divmod(total, n)
    return [base + (1 if i < rem else 0) for i in range(n)]
