"""Provider-neutral completion types, errors and usage accounting."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Protocol

from ..domain import TokenUsage
from ..prompts import PromptBundle


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0
    top_p: float = 1.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    usage: TokenUsage
    model_id: str
    latency_ms: float = 0.0
    retries: int = 0


class ProviderError(RuntimeError):
    """The endpoint could not produce a completion after all retries."""

    def __init__(self, message: str, *, model_id: str = "", question_id: str = "", attempts: int = 0):
        super().__init__(message)
        self.model_id = model_id
        self.question_id = question_id
        self.attempts = attempts


class ProtocolError(ProviderError):
    """The endpoint answered, but the body is not a chat-completions response."""


class ScriptExhausted(RuntimeError):
    """A scripted provider was called more often than its script allows."""


class ChatProvider(Protocol):
    model_id: str

    def complete(
        self, bundle: PromptBundle, decoding: Decoding, *, question_id: str = ""
    ) -> CompletionResult: ...


class UsageLedger:
    """Thread-safe per-model token accumulator."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._totals: dict[str, TokenUsage] = {}

    def add(self, model_id: str, usage: TokenUsage) -> None:
        with self._lock:
            self._totals[model_id] = self._totals.get(model_id, TokenUsage()) + usage

    def get(self, model_id: str) -> TokenUsage:
        with self._lock:
            return self._totals.get(model_id, TokenUsage())

    def snapshot(self) -> dict[str, TokenUsage]:
        with self._lock:
            return dict(self._totals)


def record_usage(result: CompletionResult, ledger: UsageLedger) -> UsageLedger:
    ledger.add(result.model_id, result.usage)
    return ledger
