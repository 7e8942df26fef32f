"""Shared value types: questions, strategies, traces, token usage and prices.

Every type here is a frozen dataclass, so instances can be shared freely between
worker threads. Money is carried as :class:`decimal.Decimal` end to end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from typing import Any, Mapping

SCHEMA_VERSION = "1"
DEFAULT_LAYER_CAP = 3
GSM_EXEMPLAR_COUNT = 8


class Dataset(str, Enum):
    GSM8K = "gsm8k"
    GSM_SYMBOLIC = "gsm_symbolic"
    AIME_2025 = "aime_2025"
    MATH_500 = "math_500"


class Variant(str, Enum):
    GSM8K = "gsm8k"
    SYMBOLIC_MAIN = "symbolic_main"
    SYMBOLIC_P1 = "symbolic_p1"
    SYMBOLIC_P2 = "symbolic_p2"
    AIME_2025 = "aime_2025"
    MATH_500 = "math_500"

    @property
    def dataset(self) -> Dataset:
        if self.value.startswith("symbolic_"):
            return Dataset.GSM_SYMBOLIC
        return Dataset(self.value)

    @property
    def gsm_family(self) -> bool:
        return self.dataset in (Dataset.GSM8K, Dataset.GSM_SYMBOLIC)

    @property
    def symbolic(self) -> bool:
        return self.dataset is Dataset.GSM_SYMBOLIC


class StrategyKind(str, Enum):
    BASELINE = "Baseline"
    COT = "CoT"
    SR = "SR"
    MAPS = "MAPS"


class Verdict(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    UNPARSEABLE = "unparseable"


class TraceError(ValueError):
    """A domain object was constructed with values that break its invariants."""


@dataclass(frozen=True)
class GoldAnswer:
    canonical: str
    numeric: Fraction | None = None


@dataclass(frozen=True)
class Question:
    id: str
    body: str
    gold: GoldAnswer
    variant: Variant

    def __post_init__(self) -> None:
        if not self.id:
            raise TraceError("question id must be non-empty")

    @property
    def dataset(self) -> Dataset:
        return self.variant.dataset


@dataclass(frozen=True)
class Exemplar:
    problem: str
    solution: str


@dataclass(frozen=True)
class StrategySpec:
    """Which prompting method to run, plus its parameters.

    ``max_layers`` counts reflection layers only; the initial answer pass is
    always present and is not counted.
    """

    kind: StrategyKind
    max_layers: int = 0
    exemplars: tuple[Exemplar, ...] = ()
    boxed_output: bool = False

    def __post_init__(self) -> None:
        if self.max_layers < 0:
            raise TraceError("max_layers must be >= 0")
        if self.kind in (StrategyKind.BASELINE, StrategyKind.COT) and self.max_layers != 0:
            raise TraceError(f"{self.kind.value} runs no reflection layers (max_layers=0)")
        if self.kind is StrategyKind.SR and self.max_layers != 1:
            raise TraceError("SR runs exactly one reflection layer (max_layers=1)")
        if self.kind is StrategyKind.MAPS and self.max_layers < 1:
            raise TraceError("MAPS needs max_layers >= 1")
        if self.kind is StrategyKind.BASELINE and self.exemplars:
            raise TraceError("Baseline prompts carry no exemplars")

    @property
    def label(self) -> str:
        if self.kind is StrategyKind.MAPS:
            return f"MAPS-{self.max_layers}L"
        return self.kind.value

    @classmethod
    def for_variant(
        cls,
        kind: StrategyKind | str,
        variant: Variant,
        *,
        max_layers: int | None = None,
        exemplars: tuple[Exemplar, ...] = (),
    ) -> "StrategySpec":
        """Build the strategy spec the experimental protocol uses for ``variant``.

        GSM-family prompts get the few-shot exemplars; AIME and MATH prompts get
        no exemplars and ask for boxed output instead.
        """
        kind = StrategyKind(kind)
        if max_layers is None:
            max_layers = {StrategyKind.SR: 1, StrategyKind.MAPS: DEFAULT_LAYER_CAP}.get(kind, 0)
        if variant.gsm_family:
            shots = exemplars if kind is not StrategyKind.BASELINE else ()
            return cls(kind, max_layers, tuple(shots), boxed_output=False)
        return cls(kind, max_layers, (), boxed_output=True)


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise TraceError("token counts must be non-negative")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        if not isinstance(other, TokenUsage):
            return NotImplemented
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    @staticmethod
    def sum(usages) -> "TokenUsage":
        total = TokenUsage()
        for u in usages:
            total = total + u
        return total


@dataclass(frozen=True)
class LayerRecord:
    layer_index: int
    model_output: str
    verdict: Verdict
    usage: TokenUsage = field(default_factory=TokenUsage)
    reflection_prompt: str | None = None
    extracted: str | None = None
    # set when an empty meta-prompt reply forced the static reflection template
    fallback_static: bool = False


@dataclass(frozen=True)
class AttemptTrace:
    question_id: str
    strategy: StrategySpec
    run_index: int
    layers: tuple[LayerRecord, ...]
    final_verdict: Verdict
    total_usage: TokenUsage
    total_cost_usd: Decimal = Decimal(0)

    @property
    def reflections_used(self) -> int:
        return len(self.layers) - 1


class UnknownModelError(KeyError):
    """A price or provider lookup named a model that is not configured."""


@dataclass(frozen=True)
class ModelRate:
    usd_per_1m_input: Decimal
    usd_per_1m_output: Decimal

    def __post_init__(self) -> None:
        if self.usd_per_1m_input < 0 or self.usd_per_1m_output < 0:
            raise TraceError("rates must be non-negative")

    def cost(self, usage: TokenUsage) -> Decimal:
        """Exact USD cost; scaling by 10**-6 only moves the decimal exponent."""
        total = usage.prompt_tokens * self.usd_per_1m_input + usage.completion_tokens * self.usd_per_1m_output
        return total.scaleb(-6)


@dataclass(frozen=True)
class PriceSheet:
    rates: Mapping[str, ModelRate]

    def rate(self, model_id: str) -> ModelRate:
        try:
            return self.rates[model_id]
        except KeyError:
            raise UnknownModelError(model_id) from None

    def cost(self, model_id: str, usage: TokenUsage) -> Decimal:
        return self.rate(model_id).cost(usage)

    def __contains__(self, model_id: object) -> bool:
        return model_id in self.rates

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "PriceSheet":
        """Parse ``{model: {input: rate, output: rate}}``; rates go through ``str``
        so YAML floats such as 0.15 stay exactly 0.15."""
        rates = {}
        for model_id, entry in raw.items():
            rates[str(model_id)] = ModelRate(
                Decimal(str(entry["input"])), Decimal(str(entry["output"]))
            )
        return cls(rates)


def validate_trace(trace: AttemptTrace, gold: GoldAnswer | None = None) -> list[str]:
    """List every invariant the trace breaks; an empty list means it is well formed."""
    problems: list[str] = []
    layers = trace.layers
    if not layers:
        return ["no layers"]
    if [layer.layer_index for layer in layers] != list(range(len(layers))):
        problems.append("layer indices not consecutive from 0")
    if layers[0].reflection_prompt is not None:
        problems.append("initial layer has a reflection prompt")
    if trace.final_verdict is not layers[-1].verdict:
        problems.append("final verdict differs from last layer")
    if any(layer.verdict is Verdict.CORRECT for layer in layers[:-1]):
        problems.append("layer after correct verdict")
    if TokenUsage.sum(layer.usage for layer in layers) != trace.total_usage:
        problems.append("usage sum mismatch")
    for layer in layers:
        if layer.verdict is Verdict.CORRECT:
            if layer.extracted is None:
                problems.append(f"layer {layer.layer_index} correct without an extracted answer")
            elif gold is not None:
                from .codec import compare, normalize

                if compare(normalize(layer.extracted), gold) is not Verdict.CORRECT:
                    problems.append(f"layer {layer.layer_index} marked correct but differs from gold")
    if trace.total_cost_usd < 0:
        problems.append("negative cost")
    return problems


# -- run-log encoding ---------------------------------------------------------


def _usage_dict(u: TokenUsage) -> dict[str, int]:
    return {"prompt_tokens": u.prompt_tokens, "completion_tokens": u.completion_tokens}


def strategy_to_dict(spec: StrategySpec) -> dict[str, Any]:
    return {
        "kind": spec.kind.value,
        "max_layers": spec.max_layers,
        "exemplars": [{"problem": e.problem, "solution": e.solution} for e in spec.exemplars],
        "boxed_output": spec.boxed_output,
    }


def strategy_from_dict(d: Mapping[str, Any]) -> StrategySpec:
    return StrategySpec(
        kind=StrategyKind(d["kind"]),
        max_layers=int(d["max_layers"]),
        exemplars=tuple(Exemplar(e["problem"], e["solution"]) for e in d["exemplars"]),
        boxed_output=bool(d["boxed_output"]),
    )


def trace_to_dict(trace: AttemptTrace) -> dict[str, Any]:
    return {
        "question_id": trace.question_id,
        "strategy": strategy_to_dict(trace.strategy),
        "run_index": trace.run_index,
        "layers": [
            {
                "layer_index": layer.layer_index,
                "reflection_prompt": layer.reflection_prompt,
                "model_output": layer.model_output,
                "extracted": layer.extracted,
                "verdict": layer.verdict.value,
                "usage": _usage_dict(layer.usage),
                "fallback_static": layer.fallback_static,
            }
            for layer in trace.layers
        ],
        "final_verdict": trace.final_verdict.value,
        "total_usage": _usage_dict(trace.total_usage),
        "total_cost_usd": str(trace.total_cost_usd),
    }


def trace_from_dict(d: Mapping[str, Any]) -> AttemptTrace:
    return AttemptTrace(
        question_id=d["question_id"],
        strategy=strategy_from_dict(d["strategy"]),
        run_index=int(d["run_index"]),
        layers=tuple(
            LayerRecord(
                layer_index=int(layer["layer_index"]),
                reflection_prompt=layer["reflection_prompt"],
                model_output=layer["model_output"],
                extracted=layer["extracted"],
                verdict=Verdict(layer["verdict"]),
                usage=TokenUsage(**layer["usage"]),
                fallback_static=bool(layer.get("fallback_static", False)),
            )
            for layer in d["layers"]
        ),
        final_verdict=Verdict(d["final_verdict"]),
        total_usage=TokenUsage(**d["total_usage"]),
        total_cost_usd=Decimal(d["total_cost_usd"]),
    )


def dumps_record(obj: Mapping[str, Any]) -> str:
    """Canonical single-line JSON: sorted keys, no insignificant whitespace."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def encode_trace(trace: AttemptTrace) -> str:
    return dumps_record({"schema_version": SCHEMA_VERSION, **trace_to_dict(trace)})


def decode_trace(line: str) -> AttemptTrace:
    d = json.loads(line)
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise TraceError(f"unsupported schema_version {version!r}")
    return trace_from_dict(d)
