"""Runs one strategy on one question.

Layer 0 is the initial answer. Baseline and CoT stop there. SR adds one
reflection layer driven by the static template. MAPS adds up to ``max_layers``
reflection layers; each first asks the model for a reflection prompt tailored
to the attempts so far, then re-answers under that prompt. Every strategy
stops as soon as an answer is verified correct.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Protocol

from . import codec
from .domain import (
    DEFAULT_LAYER_CAP,
    AttemptTrace,
    LayerRecord,
    ModelRate,
    Question,
    StrategyKind,
    StrategySpec,
    TokenUsage,
    Verdict,
)
from .prompts import PromptBundle, PromptForge
from .providers.base import ChatProvider, CompletionResult, Decoding, ProviderError

logger = logging.getLogger(__name__)

EMPTY_OUTPUT = "(the previous response was empty)"


class Verifier(Protocol):
    def verify(self, output: str, question: Question) -> codec.Graded: ...


class GoldAnswerVerifier:
    """Grades against the question's gold answer."""

    def verify(self, output: str, question: Question) -> codec.Graded:
        return codec.grade(output, question.gold, question.variant)


@dataclass(frozen=True)
class EngineConfig:
    spec: StrategySpec
    decoding: Decoding = field(default_factory=Decoding)
    verifier: Verifier = field(default_factory=GoldAnswerVerifier)
    layer_cap: int = DEFAULT_LAYER_CAP

    def __post_init__(self) -> None:
        if self.spec.max_layers > self.layer_cap:
            raise ValueError(
                f"max_layers={self.spec.max_layers} exceeds the layer cap of {self.layer_cap}; "
                "raise layer_cap explicitly to go deeper"
            )

    @property
    def max_layers(self) -> int:
        return self.spec.max_layers


class AttemptFailed(RuntimeError):
    """The provider gave up part-way through an attempt; the attempt can be re-run."""

    def __init__(self, question_id: str, layers_done: int, cause: ProviderError):
        super().__init__(f"attempt on {question_id!r} failed after {layers_done} layer(s): {cause}")
        self.question_id = question_id
        self.layers_done = layers_done
        self.cause = cause


def provider_call_count(spec: StrategySpec, reflections: int) -> int:
    """Provider calls made by an attempt that executed ``reflections`` layers."""
    if not 0 <= reflections <= spec.max_layers:
        raise ValueError(f"{spec.label} cannot execute {reflections} reflection layers")
    if spec.kind is StrategyKind.MAPS:
        return 1 + 2 * reflections
    return 1 + reflections


def run_attempt(
    question: Question,
    config: EngineConfig,
    provider: ChatProvider,
    *,
    forge: PromptForge | None = None,
    run_index: int = 0,
    rate: ModelRate | None = None,
) -> AttemptTrace:
    forge = forge or PromptForge()
    spec = config.spec
    layers: list[LayerRecord] = []

    def call(bundle: PromptBundle) -> CompletionResult:
        try:
            return provider.complete(bundle, config.decoding, question_id=question.id)
        except ProviderError as exc:
            raise AttemptFailed(question.id, len(layers), exc) from exc

    def answer_layer(bundle: PromptBundle, reflection: str | None, extra: TokenUsage,
                     fallback: bool = False) -> LayerRecord:
        result = call(bundle)
        graded = config.verifier.verify(result.text, question)
        record = LayerRecord(
            layer_index=len(layers),
            model_output=result.text,
            verdict=graded.verdict,
            usage=extra + result.usage,
            reflection_prompt=reflection,
            extracted=graded.extracted,
            fallback_static=fallback,
        )
        layers.append(record)
        return record

    last = answer_layer(forge.build_initial(question, spec), None, TokenUsage())

    for _ in range(spec.max_layers):
        if last.verdict is Verdict.CORRECT:
            break
        prior = last.model_output or EMPTY_OUTPUT
        if spec.kind is StrategyKind.SR:
            bundle = forge.build_static_reflection(question, prior)
            last = answer_layer(bundle, forge.static_instruction, TokenUsage())
            continue
        meta = call(forge.build_meta_prompt(question, layers))
        generated = meta.text.strip()
        if generated:
            bundle = forge.build_reflection_from_generated(question, generated, prior)
            last = answer_layer(bundle, generated, meta.usage)
        else:
            logger.warning("empty meta-prompt reply for %s at layer %d; using static reflection",
                           question.id, len(layers))
            bundle = forge.build_static_reflection(question, prior)
            last = answer_layer(bundle, forge.static_instruction, meta.usage, fallback=True)

    total = TokenUsage.sum(layer.usage for layer in layers)
    cost = rate.cost(total) if rate is not None else Decimal(0)
    return AttemptTrace(
        question_id=question.id,
        strategy=spec,
        run_index=run_index,
        layers=tuple(layers),
        final_verdict=last.verdict,
        total_usage=total,
        total_cost_usd=cost,
    )

