"""Chat-completions HTTP client (OpenAI, OpenRouter and compatible endpoints)."""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable

import httpx

from ..domain import TokenUsage
from ..prompts import PromptBundle
from .base import CompletionResult, Decoding, ProtocolError, ProviderError

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})


@dataclass(frozen=True)
class ProviderConfig:
    model_id: str
    base_url: str = "https://openrouter.ai/api/v1"
    api_key_env: str = "OPENROUTER_API_KEY"
    timeout: float = 120.0
    max_retries: int = 5
    backoff_base: float = 1.0
    backoff_cap: float = 60.0
    jitter: bool = True
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise ProviderError(f"environment variable {self.api_key_env} is not set", model_id=self.model_id)
        return key


def request_body(bundle: PromptBundle, decoding: Decoding, model_id: str) -> dict[str, Any]:
    return {
        "model": model_id,
        "messages": bundle.messages(),
        "temperature": decoding.temperature,
        "top_p": decoding.top_p,
    }


def parse_response(data: Any) -> tuple[str, TokenUsage]:
    try:
        text = data["choices"][0]["message"]["content"]
        usage = data["usage"]
        counts = TokenUsage(int(usage["prompt_tokens"]), int(usage["completion_tokens"]))
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed chat-completions response: {exc!r}") from exc
    if not isinstance(text, str):
        # some endpoints send null content for refusals
        text = "" if text is None else str(text)
    return text, counts


def _retry_after(response: httpx.Response) -> float | None:
    value = response.headers.get("retry-after")
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


class OpenAICompatProvider:
    """Blocking chat-completions client, safe to share between worker threads.

    At most ``max_in_flight`` requests are outstanding at once. Transport
    errors, 429 and 5xx responses are retried with exponential backoff; a
    ``Retry-After`` header overrides the computed delay. Only the successful
    call's usage is returned, so retries never double count tokens.
    """

    def __init__(
        self,
        config: ProviderConfig,
        *,
        client: httpx.Client | None = None,
        api_key: str | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.config = config
        self.model_id = config.model_id
        self._client = client or httpx.Client(timeout=config.timeout)
        self._api_key = api_key
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def _delay(self, attempt: int) -> float:
        delay = min(self.config.backoff_cap, self.config.backoff_base * 2**attempt)
        if self.config.jitter:
            delay *= 0.5 + self._rng.random() / 2
        return delay

    def complete(
        self, bundle: PromptBundle, decoding: Decoding, *, question_id: str = ""
    ) -> CompletionResult:
        cfg = self.config
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {self._api_key or cfg.api_key()}"}
        body = request_body(bundle, decoding, cfg.model_id)
        last_error = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            wait: float | None = None
            start = time.monotonic()
            try:
                with self._slots:
                    response = self._client.post(url, json=body, headers=headers, timeout=cfg.timeout)
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc!r}"
            else:
                if response.status_code == 200:
                    try:
                        payload = response.json()
                    except ValueError as exc:
                        raise ProtocolError(f"response is not JSON: {exc}", model_id=cfg.model_id,
                                            question_id=question_id, attempts=attempt + 1) from exc
                    text, usage = parse_response(payload)
                    latency = (time.monotonic() - start) * 1000
                    return CompletionResult(text, usage, cfg.model_id, latency, retries=attempt)
                last_error = f"HTTP {response.status_code}: {response.text[:300]}"
                if response.status_code not in RETRYABLE_STATUS:
                    raise ProviderError(last_error, model_id=cfg.model_id,
                                        question_id=question_id, attempts=attempt + 1)
                wait = _retry_after(response)
            if attempt == cfg.max_retries:
                break
            delay = wait if wait is not None else self._delay(attempt)
            logger.warning("%s: %s; retry %d/%d in %.1fs", cfg.model_id, last_error,
                           attempt + 1, cfg.max_retries, delay)
            self._sleep(delay)
        raise ProviderError(
            f"{cfg.model_id}: giving up after {cfg.max_retries + 1} attempts ({last_error})",
            model_id=cfg.model_id, question_id=question_id, attempts=cfg.max_retries + 1,
        )

    def close(self) -> None:
        self._client.close()
