"""Benchmark harness for multi-layer self-reflection prompting on math word problems."""

from .codec import compare, extract_final_answer, grade, normalize
from .domain import (
    AttemptTrace,
    GoldAnswer,
    LayerRecord,
    ModelRate,
    PriceSheet,
    Question,
    StrategyKind,
    StrategySpec,
    TokenUsage,
    Variant,
    Verdict,
)
from .engine import EngineConfig, run_attempt
from .prompts import PromptForge

__version__ = "0.1.0"

__all__ = [
    "AttemptTrace",
    "EngineConfig",
    "GoldAnswer",
    "LayerRecord",
    "ModelRate",
    "PriceSheet",
    "PromptForge",
    "Question",
    "StrategyKind",
    "StrategySpec",
    "TokenUsage",
    "Variant",
    "Verdict",
    "compare",
    "extract_final_answer",
    "grade",
    "normalize",
    "run_attempt",
]
