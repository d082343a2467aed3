"""Chat-completions client with retries and a content-addressed cache.

Requests use the common ``/chat/completions`` body (model, messages,
temperature, top_p, max_tokens) and bearer-token auth.  Every successful
response is stored under ``<cache_dir>/<digest[:2]>/<digest>.json`` before
it is returned, so a warm cache replays a run without network access.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx

from .datamodel import BenchmarkEntry, GenerationRecord
from .wordcount import count_words

logger = logging.getLogger(__name__)

Message = Mapping[str, str]
MAX_RETRIES_LIMIT = 10


class GenClientError(RuntimeError):
    """Base class for transport failures."""


class ConfigError(ValueError):
    """The endpoint configuration is unusable (e.g. missing API key)."""


class APIError(GenClientError):
    """Non-retryable HTTP error response."""

    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body[:500]
        super().__init__(f"HTTP {status}: {self.body}")


class RetriesExhausted(GenClientError):
    """A transient failure persisted through every retry."""

    tag = "retryable-exhausted"

    def __init__(self, attempts: int, last: str):
        self.attempts = attempts
        super().__init__(f"{self.tag} after {attempts} attempt(s): {last}")


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key_env: str | None = None
    temperature: float = 0.7
    top_p: float = 0.9
    max_tokens: int = 2048
    timeout: float = 120.0
    max_retries: int = 3
    backoff: float = 1.0

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ConfigError("base_url must be non-empty")
        if not self.model_name:
            raise ConfigError("model_name must be non-empty")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ConfigError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be positive")
        if not 0 <= self.max_retries <= MAX_RETRIES_LIMIT:
            raise ConfigError(f"max_retries must be in [0, {MAX_RETRIES_LIMIT}]")

    @property
    def url(self) -> str:
        base = self.base_url.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/chat/completions"

    def request_body(self, messages: Sequence[Message]) -> dict:
        return {
            "model": self.model_name,
            "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }


def cache_key(cfg: EndpointConfig, body: Mapping) -> str:
    material = json.dumps(
        {"base_url": cfg.base_url, "model": cfg.model_name, "body": body},
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


class ResponseCache:
    """Directory of JSON files keyed by request digest."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, digest: str) -> Path:
        return self.root / digest[:2] / f"{digest}.json"

    def get(self, digest: str) -> str | None:
        p = self.path(digest)
        if not p.exists():
            return None
        return json.loads(p.read_text(encoding="utf-8"))["text"]

    def put(self, digest: str, body: Mapping, text: str, raw: Mapping | None = None) -> None:
        p = self.path(digest)
        p.parent.mkdir(parents=True, exist_ok=True)
        doc = {"request": body, "text": text, "response": raw}
        fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, ensure_ascii=False, indent=1)
            os.replace(tmp, p)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise


def _is_transient(status: int) -> bool:
    return status == 429 or 500 <= status < 600


class ChatClient:
    """Thread-safe chat-completions caller.

    ``transport`` and ``sleep`` exist so tests can run without a network or
    real delays.  ``network_calls`` counts HTTP requests actually sent.
    """

    def __init__(
        self,
        cfg: EndpointConfig,
        cache_dir: str | Path | None = None,
        *,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self.cache = ResponseCache(cache_dir) if cache_dir is not None else None
        self._transport = transport
        self._sleep = sleep
        self._http: httpx.Client | None = None
        self._lock = threading.Lock()
        self.network_calls = 0

    def _client(self) -> httpx.Client:
        with self._lock:
            if self._http is None:
                self._http = httpx.Client(timeout=self.cfg.timeout, transport=self._transport)
            self.network_calls += 1
            return self._http

    def close(self) -> None:
        if self._http is not None:
            self._http.close()
            self._http = None

    def __enter__(self) -> "ChatClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        var = self.cfg.api_key_env
        if var:
            key = os.environ.get(var)
            if not key:
                raise ConfigError(f"environment variable {var} is not set (API key for {self.cfg.base_url})")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, messages: Sequence[Message]) -> str:
        """Return the first choice's message content for *messages*."""
        body = self.cfg.request_body(messages)
        digest = cache_key(self.cfg, body)
        if self.cache is not None:
            hit = self.cache.get(digest)
            if hit is not None:
                return hit
        headers = self._headers()
        last = ""
        attempts = self.cfg.max_retries + 1
        for attempt in range(attempts):
            if attempt:
                self._sleep(self.cfg.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client().post(self.cfg.url, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                last = f"timeout ({exc})"
                logger.warning("request to %s timed out (attempt %d)", self.cfg.url, attempt + 1)
                continue
            except httpx.TransportError as exc:
                last = f"transport error ({exc})"
                logger.warning("transport error for %s (attempt %d): %s", self.cfg.url, attempt + 1, exc)
                continue
            if _is_transient(resp.status_code):
                last = f"HTTP {resp.status_code}"
                logger.warning("HTTP %d from %s (attempt %d)", resp.status_code, self.cfg.url, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise APIError(resp.status_code, resp.text)
            raw = resp.json()
            text = _extract_text(raw)
            if self.cache is not None:
                self.cache.put(digest, body, text, raw)
            return text
        raise RetriesExhausted(attempts, last)


def _extract_text(raw: Mapping) -> str:
    try:
        content = raw["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise APIError(200, f"unexpected response shape: {json.dumps(raw)[:300]}") from exc
    if not isinstance(content, str):
        raise APIError(200, "message content is not a string")
    return content


def make_record(entry: BenchmarkEntry, model_label: str, response: str) -> GenerationRecord:
    wc = count_words(response)
    return GenerationRecord(
        entry_id=entry.id,
        model_label=model_label,
        response=response,
        word_count=wc,
        violation=wc > entry.target_len,
    )


def failure_record(entry: BenchmarkEntry, model_label: str, error: str) -> GenerationRecord:
    return GenerationRecord(
        entry_id=entry.id,
        model_label=model_label,
        response="",
        word_count=0,
        violation=True,
        failed=True,
        error=error,
    )


def generate_over_benchmark(
    client: ChatClient,
    bench: Sequence[BenchmarkEntry],
    concurrency: int = 4,
    *,
    model_label: str | None = None,
    use_li_prompt: bool = True,
) -> list[GenerationRecord]:
    """Generate one response per entry, at most *concurrency* in flight.

    Output follows benchmark order.  Entries whose request fails become
    failure records; the run raises only when every entry failed.
    """
    if not bench:
        raise ValueError("benchmark is empty")
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    label = model_label or client.cfg.model_name

    def one(entry: BenchmarkEntry) -> GenerationRecord:
        prompt = entry.li_prompt if use_li_prompt else entry.original_prompt
        try:
            text = client.complete([{"role": "user", "content": prompt}])
        except GenClientError as exc:
            logger.error("generation failed for %s: %s", entry.id, exc)
            return failure_record(entry, label, str(exc))
        return make_record(entry, label, text)

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        records = list(pool.map(one, bench))
    if all(r.failed for r in records):
        raise GenClientError(f"all {len(records)} generations failed; first error: {records[0].error}")
    return records
