"""Deterministic test doubles.

``ScriptedProvider`` replays canned replies per question in call order.
``SimulatedProvider`` is stateless: each reply is a pure function of the model,
question and prompt text, so results survive restarts and parallel execution.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from typing import Mapping, Sequence

from ..domain import TokenUsage
from ..prompts import PromptBundle, Purpose
from .base import CompletionResult, Decoding, ScriptExhausted


@dataclass(frozen=True)
class ScriptedReply:
    text: str
    usage: TokenUsage = TokenUsage()


@dataclass(frozen=True)
class Invocation:
    question_id: str
    ordinal: int
    purpose: Purpose
    prompt: str
    decoding: Decoding


class ScriptedProvider:
    def __init__(self, script: Mapping[str, Sequence[ScriptedReply]], model_id: str = "scripted"):
        self.model_id = model_id
        self._script = {qid: list(replies) for qid, replies in script.items()}
        self._next: dict[str, int] = {}
        self._lock = threading.Lock()
        self.log: list[Invocation] = []

    def complete(
        self, bundle: PromptBundle, decoding: Decoding, *, question_id: str = ""
    ) -> CompletionResult:
        with self._lock:
            ordinal = self._next.get(question_id, 0)
            replies = self._script.get(question_id, [])
            if ordinal >= len(replies):
                raise ScriptExhausted(
                    f"no scripted reply for ({question_id!r}, call {ordinal}); "
                    f"script has {len(replies)}"
                )
            self._next[question_id] = ordinal + 1
            self.log.append(Invocation(question_id, ordinal, bundle.purpose, bundle.user, decoding))
            reply = replies[ordinal]
        return CompletionResult(reply.text, reply.usage, self.model_id)

    def calls_for(self, question_id: str) -> list[Invocation]:
        with self._lock:
            return [inv for inv in self.log if inv.question_id == question_id]

    @classmethod
    def from_records(cls, records, model_id: str = "scripted") -> "ScriptedProvider":
        """Build from dicts with ``question_id``, ``ordinal``, ``text`` and token counts."""
        by_q: dict[str, dict[int, ScriptedReply]] = {}
        for rec in records:
            usage = TokenUsage(int(rec.get("prompt_tokens", 0)), int(rec.get("completion_tokens", 0)))
            by_q.setdefault(str(rec["question_id"]), {})[int(rec["ordinal"])] = ScriptedReply(rec["text"], usage)
        script = {}
        for qid, replies in by_q.items():
            if sorted(replies) != list(range(len(replies))):
                raise ValueError(f"script ordinals for {qid!r} are not 0..n-1")
            script[qid] = [replies[i] for i in range(len(replies))]
        return cls(script, model_id=model_id)


def _unit(*parts: str) -> float:
    digest = hashlib.sha256("\x1f".join(parts).encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _count_tokens(text: str) -> int:
    return len(text.split())


class SimulatedProvider:
    """Answers correctly with a fixed probability per call type.

    Initial answers are right with probability ``p_initial`` and reflection
    answers with ``p_reflect``; the coin is a hash of (seed, model, question,
    prompt), so the same prompt always gets the same reply. Wrong answers are
    the gold value plus a small offset, so they never collide with gold.
    """

    def __init__(
        self,
        golds: Mapping[str, str],
        model_id: str = "simulated",
        *,
        seed: int = 0,
        p_initial: float = 0.6,
        p_reflect: float = 0.4,
    ):
        self.model_id = model_id
        self.golds = dict(golds)
        self.seed = seed
        self.p_initial = p_initial
        self.p_reflect = p_reflect
        self._lock = threading.Lock()
        self.calls = 0

    def complete(
        self, bundle: PromptBundle, decoding: Decoding, *, question_id: str = ""
    ) -> CompletionResult:
        with self._lock:
            self.calls += 1
        u = _unit(str(self.seed), self.model_id, question_id, bundle.user)
        if bundle.purpose is Purpose.META_PROMPT_REQUEST:
            tag = int(u * 1e6)
            text = (
                f"Check each step of your previous solution (review #{tag}). "
                "List the quantities in the problem, recompute every operation, "
                "and verify the final answer against the question."
            )
        else:
            gold = self.golds[question_id]
            p = self.p_initial if bundle.purpose is Purpose.INITIAL else self.p_reflect
            answer = gold if u < p else self._wrong(gold, u)
            text = (
                "Working through the problem step by step.\n"
                f"The answer is \\boxed{{{answer}}}.\n#### {answer}"
            )
        usage = TokenUsage(_count_tokens(bundle.user), _count_tokens(text))
        return CompletionResult(text, usage, self.model_id)

    @staticmethod
    def _wrong(gold: str, u: float) -> str:
        offset = 1 + int(u * 1000) % 9
        try:
            return str(int(gold) + offset)
        except ValueError:
            return f"{gold}+{offset}"
