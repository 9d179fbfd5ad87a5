import json
import logging
import threading
import time

import httpx
import numpy as np
import pytest

from autoda.core import GeneratorUnavailable
from autoda.dsl import EvalContext, INITIAL_SOURCE, evaluate, parse
from autoda.evolution import GenerationContext
from autoda.llm import (
    BANK, GRAMMAR_REFERENCE, DEFAULT_MODEL, EmptyCompletion, LlmClient, LlmConfig, LlmGenerator, MockGenerator,
    PromptTemplate, extract_program, render_crossover_prompt, render_initialization_prompt,
    render_mutation_prompt, request_body, request_program, splice,
)

KEY = "sk-secret-value"


def reply(text, status=200):
    return httpx.Response(status, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


class Scripted:
    """httpx transport handler returning queued responses and recording requests."""

    def __init__(self, *responses):
        self.responses = list(responses)
        self.requests = []

    def __call__(self, request):
        self.requests.append(request)
        r = self.responses.pop(0)
        if isinstance(r, Exception):
            raise r
        return r


def client_for(handler, **cfg):
    config = LlmConfig(base_url="http://stub.invalid/v1", api_key=KEY, **cfg)
    sleeps = []
    client = LlmClient(config, transport=httpx.MockTransport(handler), sleep=sleeps.append)
    return client, sleeps


# prompts


def test_initialization_prompt_content():
    text = render_initialization_prompt()
    assert "ranges from 0.5 to 1.5" in text
    assert "adding, subtracting, multiplying, dividing, dot product" in text
    assert GRAMMAR_REFERENCE in text
    for name in ("x0", "x1", "noise"):
        assert name in text
    assert "org_img" not in text and "best_adv_img" not in text


def test_crossover_and_mutation_prompts():
    text = render_crossover_prompt("return x1", "return x0\n", 0.5, None)
    assert "```gen\nreturn x1\n```" in text and "```gen\nreturn x0\n```" in text
    assert "score 0.5" in text and "score unknown" in text and GRAMMAR_REFERENCE in text
    text = render_mutation_prompt("return x1", 0.25)
    assert "return x1" in text and "0.25" in text and "small modification" in text


def test_template_requires_placeholders():
    with pytest.raises(ValueError):
        PromptTemplate("crossover", "only {parent_a} and {grammar_reference}")
    with pytest.raises(ValueError):
        PromptTemplate("summary", "{grammar_reference}")


# extraction


def test_extract_fenced_block():
    text = "Sure!\n```gen\nd = x0 - x1\nreturn x1 + s * d\n```\nand another\n```\nreturn x0\n```"
    assert extract_program(text) == "d = x0 - x1\nreturn x1 + s * d\n"


def test_extract_prose_fallback():
    assert extract_program("  return x1  \n\n") == "return x1\n"


def test_extract_empty():
    with pytest.raises(EmptyCompletion):
        extract_program("```gen\n\n```")
    with pytest.raises(EmptyCompletion):
        extract_program("   ")


# config


def test_config_defaults_and_validation():
    cfg = LlmConfig()
    assert cfg.model_name == DEFAULT_MODEL and cfg.temperature == 1.0 and cfg.max_retries == 3
    assert cfg.timeout == 60.0
    with pytest.raises(ValueError):
        LlmConfig(base_url="not a url")
    with pytest.raises(ValueError):
        LlmConfig(max_retries=-1)


def test_config_from_env(monkeypatch):
    monkeypatch.setenv("AUTODA_API_KEY", KEY)
    monkeypatch.setenv("AUTODA_BASE_URL", "http://localhost:8000/v1")
    monkeypatch.setenv("AUTODA_MODEL", "local-model")
    cfg = LlmConfig.from_env(temperature=0.2)
    assert (cfg.api_key, cfg.base_url, cfg.model_name, cfg.temperature) == (KEY, "http://localhost:8000/v1",
                                                                            "local-model", 0.2)
    assert KEY not in repr(cfg)


# transport


def test_request_schema_and_auth(caplog):
    handler = Scripted(reply("```gen\nreturn x1\n```"))
    client, _ = client_for(handler)
    with caplog.at_level(logging.DEBUG):
        assert request_program(client.config, "hello", client) == "return x1\n"
    req = handler.requests[0]
    assert req.method == "POST" and str(req.url) == "http://stub.invalid/v1/chat/completions"
    body = json.loads(req.content)
    assert set(body) == {"model", "messages", "temperature"}
    assert body == request_body(client.config, "hello")
    assert body["messages"] == [{"role": "user", "content": "hello"}]
    assert req.headers["authorization"] == f"Bearer {KEY}"
    assert KEY.encode() not in req.content
    assert KEY not in caplog.text


def test_retry_after_429():
    handler = Scripted(httpx.Response(429), reply("return x1"))
    client, sleeps = client_for(handler)
    assert client.complete("p") == "return x1"
    assert len(handler.requests) == 2 and len(sleeps) == 1
    assert 2.0 <= sleeps[0] <= 4.0


def test_backoff_grows_exponentially():
    handler = Scripted(httpx.Response(503), httpx.ConnectError("refused"), httpx.Response(500), reply("ok"))
    client, sleeps = client_for(handler)
    assert client.complete("p") == "ok"
    assert [int(s // 2) for s in sleeps] == [1, 2, 4]
    for attempt, s in enumerate(sleeps):
        assert 2.0 * 2 ** attempt <= s <= 2.0 * 2 ** attempt + 2.0


def test_retries_exhausted():
    handler = Scripted(*[httpx.Response(502)] * 3)
    client, sleeps = client_for(handler, max_retries=2)
    with pytest.raises(GeneratorUnavailable):
        client.complete("p")
    assert len(handler.requests) == 3 and len(sleeps) == 2
    assert client.request_count == 3


def test_client_error_not_retried():
    handler = Scripted(httpx.Response(401))
    client, sleeps = client_for(handler)
    with pytest.raises(GeneratorUnavailable):
        client.complete("p")
    assert len(handler.requests) == 1 and not sleeps


def test_bad_response_shape():
    client, _ = client_for(Scripted(httpx.Response(200, json={"nope": 1})))
    with pytest.raises(EmptyCompletion):
        client.complete("p")


def test_generator_maps_empty_reply_to_empty_source():
    handler = Scripted(reply("   "), reply("```gen\nreturn x0\n```"), reply("return x1"))
    client, _ = client_for(handler)
    gen = LlmGenerator(client.config, client)
    ctx = GenerationContext(0, 0, "init")
    assert gen.init_program(ctx) == ""
    assert gen.crossover("return x1", "return x0", GenerationContext(1, 5, "crossover", 0, 0.5, 0.6)) == "return x0\n"
    assert gen.mutate("return x0", GenerationContext(1, 5, "mutation", 0, 0.5)) == "return x1\n"
    assert "Program A (score 0.5)" in json.loads(handler.requests[1].content)["messages"][0]["content"]


def test_in_flight_limit():
    active, peak = [0], [0]
    lock = threading.Lock()

    def slow(request):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.02)
        with lock:
            active[0] -= 1
        return reply("return x1")

    client, _ = client_for(slow, max_in_flight=2)
    threads = [threading.Thread(target=client.complete, args=("p",)) for _ in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak[0] <= 2 and client.request_count == 6


# mock generator


def ctx(cid, role="init", attempt=0):
    return GenerationContext(0, cid, role, attempt)


def test_bank_is_valid():
    assert len(BANK) == 12 and INITIAL_SOURCE in BANK
    for src in BANK:
        parse(src)


def test_mock_init_cycles_bank():
    gen = MockGenerator(0)
    assert [gen.init_program(ctx(i)) for i in range(14)] == list(BANK) + list(BANK[:2])


def test_self_crossover_is_semantically_equal():
    gen = MockGenerator(3)
    rng = np.random.default_rng(0)
    x0, x1, noise = rng.random(5), rng.random(5), rng.standard_normal(5)
    for i, src in enumerate(BANK):
        child = parse(gen.crossover(src, src, ctx(i, "crossover")))
        a = evaluate(child, EvalContext(x0, x1, noise, 0.1, np.random.default_rng(i)))
        b = evaluate(parse(src), EvalContext(x0, x1, noise, 0.1, np.random.default_rng(i)))
        np.testing.assert_array_equal(a, b)


def test_crossover_and_mutation_always_parse():
    gen = MockGenerator(9)
    for i in range(200):
        a, b = BANK[i % 12], BANK[(i * 7 + 3) % 12]
        child = gen.crossover(a, b, ctx(i, "crossover"))
        parse(child)
        parse(gen.mutate(child, ctx(i, "mutation")))


def test_mutation_scales_one_constant():
    gen = MockGenerator(1)
    out = parse(gen.mutate("return x1 + 0.5 * noise", ctx(4, "mutation")))
    c = out.result.right.left.value
    assert c != 0.5 and 0.45 <= c <= 0.55


def test_mutation_without_constants():
    gen = MockGenerator(1)
    assert "rand(" in gen.mutate("return x1 + rand(1, 2) * noise", ctx(2, "mutation"))
    out = gen.mutate("return x1 + s * noise", ctx(2, "mutation"))
    assert parse(out) != parse("return x1 + s * noise")


def test_mock_deterministic():
    a, b = MockGenerator(5), MockGenerator(5)
    for i in range(20):
        c = ctx(i, "crossover", attempt=i % 3)
        assert a.crossover(BANK[i % 12], BANK[-1], c) == b.crossover(BANK[i % 12], BANK[-1], c)
        assert a.mutate(BANK[i % 12], c) == b.mutate(BANK[i % 12], c)


def test_splice_repairs_references():
    a = parse("u = x0 - x1\nreturn u")
    b = parse("d = x0 - x1\nk = norm2(d)\nreturn x1 + s * d / k")
    child = splice(a, b, 2)  # b's tail is empty, so d and k are re-bound
    assert child == parse("u = x0 - x1\nreturn x1 + s * x1 / s")
    renamed = splice(parse("d = x0 - x1\nreturn d"), parse("k = s\nd = x1 * k\nreturn d"), 1)
    assert [st.name for st in renamed.statements] == ["d", "d_2"]
