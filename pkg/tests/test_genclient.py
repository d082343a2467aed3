import json
import threading

import httpx
import pytest

from lenlift.datamodel import BenchmarkEntry
from lenlift.genclient import (
    APIError,
    ChatClient,
    ConfigError,
    EndpointConfig,
    GenClientError,
    RetriesExhausted,
    cache_key,
    generate_over_benchmark,
)

CFG = EndpointConfig("http://llm.test/v1", "tiny", max_retries=3, backoff=0.5)


def reply(text, status=200):
    return httpx.Response(status, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


def echo_transport(calls=None):
    def handler(request):
        body = json.loads(request.content)
        if calls is not None:
            calls.append(body)
        return reply("echo: " + body["messages"][-1]["content"])
    return httpx.MockTransport(handler)


def scripted(*responses):
    it = iter(responses)

    def handler(request):
        r = next(it)
        if isinstance(r, Exception):
            raise r
        return r
    return httpx.MockTransport(handler)


def entries(n, target=3):
    return [BenchmarkEntry(f"e{i}", f"q{i}", f"limit q{i}", target, None, None) for i in range(n)]


def test_request_body_and_url():
    calls = []
    client = ChatClient(CFG, transport=echo_transport(calls))
    assert client.complete([{"role": "user", "content": "hi"}]) == "echo: hi"
    assert calls == [{"model": "tiny", "messages": [{"role": "user", "content": "hi"}],
                      "temperature": 0.7, "top_p": 0.9, "max_tokens": 2048}]
    assert CFG.url == "http://llm.test/v1/chat/completions"


def test_cache_hit_makes_no_call(tmp_path):
    first = ChatClient(CFG, tmp_path, transport=echo_transport())
    first.complete([{"role": "user", "content": "hi"}])
    assert first.network_calls == 1
    digest = cache_key(CFG, CFG.request_body([{"role": "user", "content": "hi"}]))
    assert (tmp_path / digest[:2] / f"{digest}.json").exists()

    def boom(request):
        raise AssertionError("network used despite cache")
    second = ChatClient(CFG, tmp_path, transport=httpx.MockTransport(boom))
    assert second.complete([{"role": "user", "content": "hi"}]) == "echo: hi"
    assert second.network_calls == 0


def test_cache_key_depends_on_params():
    body = CFG.request_body([{"role": "user", "content": "hi"}])
    other = EndpointConfig("http://llm.test/v1", "tiny", temperature=0.0)
    assert cache_key(CFG, body) != cache_key(other, other.request_body([{"role": "user", "content": "hi"}]))
    assert cache_key(CFG, body) == cache_key(CFG, dict(reversed(list(body.items()))))


def test_retry_after_429():
    sleeps = []
    client = ChatClient(CFG, transport=scripted(httpx.Response(429), reply("ok")), sleep=sleeps.append)
    assert client.complete([{"role": "user", "content": "x"}]) == "ok"
    assert client.network_calls == 2
    assert sleeps == [0.5]


def test_timeouts_and_5xx_exhaust():
    sleeps = []
    client = ChatClient(
        CFG,
        transport=scripted(httpx.ReadTimeout("slow"), httpx.Response(503), httpx.ConnectError("down"), httpx.Response(500)),
        sleep=sleeps.append,
    )
    with pytest.raises(RetriesExhausted, match="retryable-exhausted after 4"):
        client.complete([{"role": "user", "content": "x"}])
    assert sleeps == [0.5, 1.0, 2.0]
    assert client.network_calls == 4


def test_client_error_not_retried():
    client = ChatClient(CFG, transport=scripted(httpx.Response(400, text="bad request")), sleep=lambda s: None)
    with pytest.raises(APIError) as info:
        client.complete([{"role": "user", "content": "x"}])
    assert info.value.status == 400
    assert client.network_calls == 1


def test_malformed_payload():
    client = ChatClient(CFG, transport=scripted(httpx.Response(200, json={"choices": []})))
    with pytest.raises(APIError, match="unexpected response shape"):
        client.complete([{"role": "user", "content": "x"}])


def test_missing_key_env(monkeypatch):
    monkeypatch.delenv("LENLIFT_TEST_KEY", raising=False)
    cfg = EndpointConfig("http://llm.test/v1", "tiny", api_key_env="LENLIFT_TEST_KEY")
    with pytest.raises(ConfigError, match="LENLIFT_TEST_KEY"):
        ChatClient(cfg, transport=echo_transport()).complete([{"role": "user", "content": "x"}])


def test_bearer_header(monkeypatch):
    monkeypatch.setenv("LENLIFT_TEST_KEY", "sk-123")
    seen = []

    def handler(request):
        seen.append(request.headers["authorization"])
        return reply("ok")
    cfg = EndpointConfig("http://llm.test/v1", "tiny", api_key_env="LENLIFT_TEST_KEY")
    ChatClient(cfg, transport=httpx.MockTransport(handler)).complete([{"role": "user", "content": "x"}])
    assert seen == ["Bearer sk-123"]


def test_config_validation():
    with pytest.raises(ConfigError):
        EndpointConfig("http://x", "m", max_retries=11)
    with pytest.raises(ConfigError):
        EndpointConfig("", "m")
    with pytest.raises(ConfigError):
        EndpointConfig("http://x", "m", top_p=0)


@pytest.mark.parametrize("concurrency", [1, 3, 8])
def test_generation_order_independent_of_concurrency(concurrency):
    client = ChatClient(CFG, transport=echo_transport())
    gens = generate_over_benchmark(client, entries(12), concurrency)
    assert [g.entry_id for g in gens] == [f"e{i}" for i in range(12)]
    assert [g.response for g in gens] == [f"echo: limit q{i}" for i in range(12)]
    assert all(g.word_count == 3 and not g.violation for g in gens)


def test_generation_records():
    client = ChatClient(CFG, transport=echo_transport())
    (g,) = generate_over_benchmark(client, entries(1, target=2), model_label="label")
    assert g.model_label == "label"
    assert g.word_count == 3 and g.violation


def test_failures_become_records():
    lock = threading.Lock()
    seen = []

    def handler(request):
        prompt = json.loads(request.content)["messages"][0]["content"]
        with lock:
            seen.append(prompt)
        return httpx.Response(400, text="nope") if prompt.endswith("q1") else reply("fine")
    client = ChatClient(CFG, transport=httpx.MockTransport(handler), sleep=lambda s: None)
    gens = generate_over_benchmark(client, entries(3))
    assert [g.failed for g in gens] == [False, True, False]
    assert gens[1].violation and gens[1].word_count == 0 and "HTTP 400" in gens[1].error


def test_all_failures_raise():
    client = ChatClient(CFG, transport=scripted(*[httpx.Response(401)] * 2))
    with pytest.raises(GenClientError, match="all 2 generations failed"):
        generate_over_benchmark(client, entries(2), 1)
