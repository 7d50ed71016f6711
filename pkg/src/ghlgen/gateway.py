"""Chat-completion and embedding access with retries and record/replay caching."""

from __future__ import annotations

import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import httpx

from ghlgen.cache import ResponseCache, canonical_json, sha256_text

logger = logging.getLogger(__name__)

LIVE_RECORD = "live_record"
REPLAY_ONLY = "replay_only"
MODES = (LIVE_RECORD, REPLAY_ONLY)

DEFAULT_CREDENTIAL_ENV = "GHL_API_KEY"


class GatewayError(Exception):
    pass


class CacheMissError(GatewayError):
    def __init__(self, digest: str, kind: str = "completion"):
        super().__init__(f"replay-only cache miss for {kind} request {digest}")
        self.digest = digest
        self.kind = kind


class ProviderError(GatewayError):
    """Non-retryable provider failure."""


class TransientProviderError(ProviderError):
    """5xx, 429, timeouts, dropped connections."""


class AuthenticationError(ProviderError):
    pass


class ContextLengthExceeded(ProviderError):
    """The prompt is too long for the model; the caller should chunk."""


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    user_text: str
    system_text: str | None = None
    attachments: tuple[tuple[str, str], ...] = ()
    temperature: float = 0.0
    seed: int = 42
    max_output_tokens: int = 4096

    def __post_init__(self):
        if not self.user_text.strip():
            raise ValueError("user_text must be nonempty")
        if not self.temperature >= 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        object.__setattr__(self, "attachments", tuple((str(a), str(b)) for a, b in self.attachments))

    def canonical(self) -> dict:
        return {
            "kind": "completion",
            "model_id": self.model_id,
            "system_text": self.system_text,
            "user_text": self.user_text,
            "attachments": [list(a) for a in self.attachments],
            "temperature": float(self.temperature),
            "seed": int(self.seed),
            "max_output_tokens": int(self.max_output_tokens),
        }

    def rendered_user_text(self) -> str:
        return inline_attachments(self.user_text, self.attachments)


@dataclass(frozen=True)
class CompletionResult:
    text: str
    input_tokens: int
    output_tokens: int
    latency_ms: int
    from_cache: bool
    digest: str
    attempts: int = 0

    @property
    def token_counts(self) -> tuple[int, int]:
        return (self.input_tokens, self.output_tokens)

    @property
    def response_digest(self) -> str:
        return sha256_text(self.text)


@dataclass(frozen=True)
class EmbeddingVector:
    components: tuple[float, ...]
    model_id: str

    def __post_init__(self):
        if not self.components:
            raise ValueError("embedding vector is empty")
        if not all(math.isfinite(c) for c in self.components):
            raise ValueError("embedding vector has non-finite components")

    def __len__(self) -> int:
        return len(self.components)


def inline_attachments(user_text: str, attachments: Sequence[tuple[str, str]]) -> str:
    if not attachments:
        return user_text
    blocks = [user_text]
    for label, body in attachments:
        blocks.append(f"<<<BEGIN {label}>>>\n{body}\n<<<END {label}>>>")
    return "\n\n".join(blocks)


def cache_key(req: CompletionRequest) -> str:
    return sha256_text(canonical_json(req.canonical()))


def embedding_key(text: str, model_id: str) -> str:
    return sha256_text(canonical_json({"kind": "embedding", "model_id": model_id, "text": text}))


# -- providers ---------------------------------------------------------------


class Provider(Protocol):
    def complete(self, req: CompletionRequest) -> tuple[str, int, int]: ...

    def embed(self, texts: list[str], model_id: str) -> list[list[float]]: ...


class OfflineProvider:
    """Refuses every call; any live traffic in replay runs is a bug."""

    def complete(self, req):
        raise GatewayError("live completion attempted with no provider configured")

    def embed(self, texts, model_id):
        raise GatewayError("live embedding attempted with no provider configured")


class HttpProvider:
    """Chat-completions / embeddings JSON endpoints (OpenAI wire shape)."""

    def __init__(self, base_url: str, api_key: str, timeout: float = 120.0, transport=None):
        self._client = httpx.Client(
            base_url=base_url.rstrip("/") + "/",
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=timeout,
            transport=transport,
        )

    @classmethod
    def from_env(cls, base_url: str, credential_env: str = DEFAULT_CREDENTIAL_ENV, **kwargs) -> "HttpProvider":
        key = os.environ.get(credential_env)
        if not key:
            raise AuthenticationError(f"environment variable {credential_env} is not set")
        return cls(base_url, key, **kwargs)

    def close(self):
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._client.post(path, json=payload)
        except (httpx.TimeoutException, httpx.TransportError) as exc:
            raise TransientProviderError(f"{path}: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthenticationError(f"{path}: HTTP {resp.status_code}")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(f"{path}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            text = resp.text
            if "context_length" in text or "maximum context length" in text:
                raise ContextLengthExceeded(f"{path}: {text[:300]}")
            raise ProviderError(f"{path}: HTTP {resp.status_code}: {text[:300]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ProviderError(f"{path}: invalid JSON response") from exc

    def complete(self, req: CompletionRequest) -> tuple[str, int, int]:
        messages = []
        if req.system_text:
            messages.append({"role": "system", "content": req.system_text})
        messages.append({"role": "user", "content": req.rendered_user_text()})
        data = self._post(
            "chat/completions",
            {
                "model": req.model_id,
                "messages": messages,
                "temperature": req.temperature,
                "seed": req.seed,
                "max_tokens": req.max_output_tokens,
            },
        )
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError("chat/completions: malformed response") from exc
        usage = data.get("usage") or {}
        return text, int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))

    def embed(self, texts: list[str], model_id: str) -> list[list[float]]:
        data = self._post("embeddings", {"model": model_id, "input": list(texts)})
        try:
            items = sorted(data["data"], key=lambda d: d["index"])
            vectors = [list(map(float, d["embedding"])) for d in items]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError("embeddings: malformed response") from exc
        if len(vectors) != len(texts):
            raise ProviderError(f"embeddings: asked for {len(texts)} vectors, got {len(vectors)}")
        return vectors


# -- gateway -------------------------------------------------------------------


@dataclass
class Gateway:
    """Cache-first access to a provider.

    In ``replay_only`` mode the provider is never called and a miss raises
    :class:`CacheMissError`. In ``live_record`` mode misses go to the provider
    (with exponential-backoff retries on transient errors) and are recorded.
    """

    cache: ResponseCache
    provider: Provider | None = None
    mode: str = REPLAY_ONLY
    max_attempts: int = 3
    backoff_s: float = 1.0
    concurrency: int = 4
    sleep: object = time.sleep
    timer: object = time.perf_counter
    provider_calls: int = field(default=0, init=False)
    _slots: threading.BoundedSemaphore = field(init=False, repr=False)
    _count_lock: threading.Lock = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_attempts < 1 or self.concurrency < 1:
            raise ValueError("max_attempts and concurrency must be >= 1")
        if self.provider is None:
            self.provider = OfflineProvider()
        self._slots = threading.BoundedSemaphore(self.concurrency)
        self._count_lock = threading.Lock()

    def _call(self, fn, *args):
        last = None
        for attempt in range(1, self.max_attempts + 1):
            with self._count_lock:
                self.provider_calls += 1
            try:
                with self._slots:
                    return fn(*args), attempt
            except TransientProviderError as exc:
                last = exc
                if attempt < self.max_attempts:
                    delay = self.backoff_s * 2 ** (attempt - 1)
                    logger.warning("transient provider error (attempt %d/%d), retrying in %.1fs: %s",
                                   attempt, self.max_attempts, delay, exc)
                    self.sleep(delay)
        raise ProviderError(f"giving up after {self.max_attempts} attempts: {last}") from last

    def complete(self, req: CompletionRequest) -> CompletionResult:
        digest = cache_key(req)
        rec = self.cache.get(digest)
        if rec is not None:
            p = rec.payload
            return CompletionResult(p["text"], p["input_tokens"], p["output_tokens"], p["latency_ms"],
                                    True, digest, 0)
        if self.mode == REPLAY_ONLY:
            raise CacheMissError(digest, "completion")
        t0 = self.timer()
        (text, n_in, n_out), attempts = self._call(self.provider.complete, req)
        latency = int(round((self.timer() - t0) * 1000))
        self.cache.put(digest, "completion",
                       {"text": text, "input_tokens": n_in, "output_tokens": n_out, "latency_ms": latency})
        return CompletionResult(text, n_in, n_out, latency, False, digest, attempts)

    def embed_batch(self, texts: Sequence[str], model_id: str) -> list[EmbeddingVector]:
        texts = list(texts)
        for i, t in enumerate(texts):
            if not t.strip():
                raise ValueError(f"text {i} is empty")
        digests = [embedding_key(t, model_id) for t in texts]
        found = {}
        missing = []
        for t, d in zip(texts, digests):
            if d in found or t in missing:
                continue
            rec = self.cache.get(d)
            if rec is None:
                missing.append(t)
            else:
                found[d] = rec.payload["vector"]
        if missing:
            if self.mode == REPLAY_ONLY:
                raise CacheMissError(embedding_key(missing[0], model_id), "embedding")
            vectors, _ = self._call(self.provider.embed, missing, model_id)
            for t, vec in zip(missing, vectors):
                EmbeddingVector(tuple(vec), model_id)
                d = embedding_key(t, model_id)
                self.cache.put(d, "embedding", {"vector": [float(x) for x in vec], "model_id": model_id})
                found[d] = vec
        return [EmbeddingVector(tuple(float(x) for x in found[d]), model_id) for d in digests]
