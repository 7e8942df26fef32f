"""Prompt construction for every strategy.

Templates are plain UTF-8 files under ``templates/<version>/`` with named
placeholders such as ``{question}``. Rendering is a single regex pass over the
known placeholder names, so LaTeX braces like ``\\boxed{}`` pass through and
substituted text is never re-expanded.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

from .domain import (
    GSM_EXEMPLAR_COUNT,
    Exemplar,
    LayerRecord,
    Question,
    StrategyKind,
    StrategySpec,
)

DEFAULT_TEMPLATE_VERSION = "v1"

_TEMPLATE_FILES = (
    "cot_gsm",
    "cot_boxed",
    "baseline_boxed",
    "answer_format_gsm",
    "answer_format_boxed",
    "static_reflection",
    "reflection",
    "meta_prompt",
)
_PLACEHOLDER = re.compile(
    r"\{(question|history|prior_output|exemplars|reflection|answer_format)\}"
)


class PromptError(ValueError):
    pass


class Purpose(str, Enum):
    INITIAL = "initial"
    META_PROMPT_REQUEST = "meta_prompt_request"
    REFLECTION = "reflection"


@dataclass(frozen=True)
class PromptBundle:
    user: str
    purpose: Purpose
    system: str | None = None

    def __post_init__(self) -> None:
        if not self.user:
            raise PromptError("prompt text must be non-empty")

    def messages(self) -> list[dict[str, str]]:
        msgs = []
        if self.system:
            msgs.append({"role": "system", "content": self.system})
        msgs.append({"role": "user", "content": self.user})
        return msgs


def render(template: str, **values: str) -> str:
    def sub(m: re.Match[str]) -> str:
        name = m.group(1)
        return values[name] if name in values else m.group(0)

    return _PLACEHOLDER.sub(sub, template)


def load_exemplars(path: str | Path) -> tuple[Exemplar, ...]:
    with open(path, encoding="utf-8") as fh:
        return _parse_exemplars(fh.read())


def _parse_exemplars(text: str) -> tuple[Exemplar, ...]:
    out = []
    for line in text.splitlines():
        if line.strip():
            rec = json.loads(line)
            out.append(Exemplar(rec["problem"], rec["solution"]))
    return tuple(out)


@dataclass(frozen=True)
class TemplateSet:
    version: str
    texts: dict[str, str]
    exemplars: tuple[Exemplar, ...]

    def __getitem__(self, name: str) -> str:
        return self.texts[name]

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.texts):
            h.update(name.encode() + b"\0" + self.texts[name].encode() + b"\0")
        for ex in self.exemplars:
            h.update(ex.problem.encode() + b"\0" + ex.solution.encode() + b"\0")
        return h.hexdigest()

    @classmethod
    def from_directory(cls, path: str | Path, version: str | None = None) -> "TemplateSet":
        root = Path(path)
        texts = {
            name: (root / f"{name}.txt").read_text(encoding="utf-8").rstrip("\n")
            for name in _TEMPLATE_FILES
        }
        exemplars = load_exemplars(root / "gsm8k_exemplars.jsonl")
        return cls(version or root.name, texts, exemplars)


@lru_cache(maxsize=None)
def packaged_templates(version: str = DEFAULT_TEMPLATE_VERSION) -> TemplateSet:
    root = resources.files("mapsbench") / "templates" / version
    if not root.is_dir():
        raise PromptError(f"no packaged template version {version!r}")
    texts = {
        name: root.joinpath(f"{name}.txt").read_text(encoding="utf-8").rstrip("\n")
        for name in _TEMPLATE_FILES
    }
    exemplars = _parse_exemplars(root.joinpath("gsm8k_exemplars.jsonl").read_text(encoding="utf-8"))
    return TemplateSet(version, texts, exemplars)


def format_exemplars(exemplars: Sequence[Exemplar]) -> str:
    return "".join(f"Q: {ex.problem}\nA: {ex.solution}\n\n" for ex in exemplars)


def format_history(history: Sequence[LayerRecord]) -> str:
    blocks = []
    for layer in history:
        stage = "initial solution" if layer.layer_index == 0 else f"reflection layer {layer.layer_index}"
        answer = layer.extracted if layer.extracted is not None else "none (no final answer could be extracted)"
        blocks.append(
            f"Attempt {layer.layer_index + 1} ({stage}):\n{layer.model_output}\n"
            f"Extracted final answer: {answer}\nVerdict: {layer.verdict.value}"
        )
    return "\n\n".join(blocks)


class PromptForge:
    """Builds every prompt from one pinned :class:`TemplateSet`."""

    def __init__(self, templates: TemplateSet | None = None):
        self.templates = templates or packaged_templates()

    def answer_format(self, question: Question) -> str:
        if question.variant.gsm_family:
            return self.templates["answer_format_gsm"]
        return self.templates["answer_format_boxed"]

    def build_initial(self, question: Question, spec: StrategySpec) -> PromptBundle:
        t = self.templates
        if spec.kind is StrategyKind.BASELINE:
            if spec.boxed_output:
                return PromptBundle(render(t["baseline_boxed"], question=question.body), Purpose.INITIAL)
            return PromptBundle(question.body, Purpose.INITIAL)

        if question.variant.gsm_family:
            if len(spec.exemplars) != GSM_EXEMPLAR_COUNT or spec.boxed_output:
                raise PromptError(
                    f"{spec.label} on {question.variant.value} needs exactly "
                    f"{GSM_EXEMPLAR_COUNT} exemplars and no boxed output, "
                    f"got {len(spec.exemplars)} exemplars"
                )
            text = render(
                t["cot_gsm"], exemplars=format_exemplars(spec.exemplars), question=question.body
            )
        else:
            if spec.exemplars or not spec.boxed_output:
                raise PromptError(
                    f"{spec.label} on {question.variant.value} takes no exemplars and boxed output"
                )
            text = render(t["cot_boxed"], question=question.body)
        return PromptBundle(text, Purpose.INITIAL)

    @property
    def static_instruction(self) -> str:
        return self.templates["static_reflection"]

    def build_static_reflection(self, question: Question, prior_output: str) -> PromptBundle:
        if not prior_output:
            raise PromptError("prior output must be non-empty")
        return self._reflection(question, self.static_instruction, prior_output)

    def build_meta_prompt(self, question: Question, history: Sequence[LayerRecord]) -> PromptBundle:
        if not history:
            raise PromptError("meta-prompt needs at least one prior attempt")
        if history[-1].verdict.value == "correct":
            raise PromptError("meta-prompt requested after a correct answer")
        text = render(
            self.templates["meta_prompt"], question=question.body, history=format_history(history)
        )
        return PromptBundle(text, Purpose.META_PROMPT_REQUEST)

    def build_reflection_from_generated(
        self, question: Question, generated_reflection: str, prior_output: str
    ) -> PromptBundle:
        if not generated_reflection.strip():
            raise PromptError("generated reflection prompt is empty")
        return self._reflection(question, generated_reflection, prior_output)

    def _reflection(self, question: Question, reflection: str, prior_output: str) -> PromptBundle:
        text = render(
            self.templates["reflection"],
            reflection=reflection,
            question=question.body,
            prior_output=prior_output,
            answer_format=self.answer_format(question),
        )
        return PromptBundle(text, Purpose.REFLECTION)


def default_exemplars() -> tuple[Exemplar, ...]:
    return packaged_templates().exemplars
