"""Program generator backed by an OpenAI-compatible chat-completions API."""

from __future__ import annotations

import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from urllib.parse import urlparse

import httpx

from ..core import AttackError, GeneratorUnavailable
from .prompts import render_crossover_prompt, render_initialization_prompt, render_mutation_prompt

log = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-3.5-turbo-1106"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
RETRY_STATUS = frozenset({429, 500, 502, 503, 504})

_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


class EmptyCompletion(AttackError):
    pass


@dataclass
class LlmConfig:
    base_url: str = DEFAULT_BASE_URL
    model_name: str = DEFAULT_MODEL
    api_key: str | None = field(default=None, repr=False)
    temperature: float = 1.0
    max_retries: int = 3
    timeout: float = 60.0
    backoff_base: float = 2.0
    max_in_flight: int = 2

    def __post_init__(self):
        parsed = urlparse(self.base_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise ValueError(f"malformed base_url {self.base_url!r}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @classmethod
    def from_env(cls, **overrides) -> "LlmConfig":
        env = {
            "base_url": os.environ.get("AUTODA_BASE_URL"),
            "model_name": os.environ.get("AUTODA_MODEL"),
            "api_key": os.environ.get("AUTODA_API_KEY"),
        }
        values = {k: v for k, v in env.items() if v}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def extract_program(reply: str) -> str:
    """First fenced code block of ``reply``, else the whole reply trimmed."""
    m = _FENCE_RE.search(reply)
    text = m.group(1) if m else reply
    text = text.strip()
    if not text:
        raise EmptyCompletion("reply contains no program text")
    return text + "\n"


def request_body(config: LlmConfig, prompt: str) -> dict:
    return {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
    }


class LlmClient:
    """Thread-safe chat client with bounded concurrency and retry/backoff.

    ``sleep`` and ``rng`` are injectable so tests can run the retry policy
    without waiting.
    """

    def __init__(self, config: LlmConfig, transport: httpx.BaseTransport | None = None,
                 sleep=time.sleep, rng: random.Random | None = None):
        self.config = config
        self._http = httpx.Client(timeout=config.timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self.request_count = 0
        self._count_lock = threading.Lock()

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        return headers

    def backoff(self, attempt: int) -> float:
        base = self.config.backoff_base
        return base * 2 ** attempt + self._rng.uniform(0, base)

    def complete(self, prompt: str) -> str:
        """Send one chat request and return the raw reply text."""
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        body = request_body(self.config, prompt)
        last_error = ""
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                delay = self.backoff(attempt - 1)
                log.info("retrying chat request in %.1fs (%s)", delay, last_error)
                self._sleep(delay)
            with self._count_lock:
                self.request_count += 1
            try:
                with self._slots:
                    resp = self._http.post(url, json=body, headers=self._headers())
            except httpx.TransportError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            if resp.status_code in RETRY_STATUS:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise GeneratorUnavailable(f"chat endpoint returned HTTP {resp.status_code}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise EmptyCompletion(f"unexpected response shape: {exc}") from None
            if not isinstance(content, str):
                raise EmptyCompletion("reply content is not text")
            return content
        raise GeneratorUnavailable(
            f"chat endpoint unavailable after {self.config.max_retries + 1} attempts ({last_error})")


def request_program(config: LlmConfig, prompt: str, client: LlmClient | None = None) -> str:
    own = client is None
    client = client or LlmClient(config)
    try:
        return extract_program(client.complete(prompt))
    finally:
        if own:
            client.close()


class LlmGenerator:
    """:class:`~autoda.evolution.ProgramGenerator` that asks a chat model.

    Empty replies come back as empty source, which fails to parse and
    triggers the evolution loop's regeneration retries.
    """

    def __init__(self, config: LlmConfig, client: LlmClient | None = None):
        self.config = config
        self.client = client or LlmClient(config)

    def _ask(self, prompt: str) -> str:
        try:
            return request_program(self.config, prompt, self.client)
        except EmptyCompletion as exc:
            log.warning("empty completion: %s", exc)
            return ""

    def init_program(self, context) -> str:
        return self._ask(render_initialization_prompt())

    def crossover(self, parent_a, parent_b, context) -> str:
        return self._ask(render_crossover_prompt(parent_a, parent_b, context.fitness_a, context.fitness_b))

    def mutate(self, parent, context) -> str:
        return self._ask(render_mutation_prompt(parent, context.fitness_a))
