"""Final-answer extraction, normalization and grading."""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from .domain import GoldAnswer, Variant, Verdict


class UnparseableAnswer(ValueError):
    """Raised when a raw answer is empty once normalization has stripped it."""


_NUMBER = r"-?(?:\d[\d,]*(?:\.\d+)?|\.\d+)"
_NUMBER_RE = re.compile(_NUMBER)
_HASH_RE = re.compile(r"####\s*([^\n]*)")
_BOXED_RE = re.compile(r"\\(?:boxed|fbox)\s*\{")


def _boxed_contents(text: str) -> str | None:
    """Contents of the last ``\\boxed{...}``, matching nested braces."""
    found = None
    for m in _BOXED_RE.finditer(text):
        depth, start = 1, m.end()
        i = start
        while i < len(text) and depth:
            if text[i] == "{":
                depth += 1
            elif text[i] == "}":
                depth -= 1
            i += 1
        if depth == 0:
            found = text[start : i - 1]
    return found


def _hash_answer(text: str) -> str | None:
    matches = _HASH_RE.findall(text)
    if not matches:
        return None
    tail = matches[-1].strip()
    return tail or None


def _last_number(text: str) -> str | None:
    numbers = _NUMBER_RE.findall(text)
    if not numbers:
        return None
    return numbers[-1].rstrip(",")


@dataclass(frozen=True)
class ExtractionRule:
    name: str
    find: Callable[[str], str | None]


BOXED = ExtractionRule("boxed", _boxed_contents)
HASH_MARK = ExtractionRule("hash", _hash_answer)
LAST_NUMBER = ExtractionRule("last_number", _last_number)

# MATH answers are expressions, so a stray trailing number is not a usable guess there.
RULES: dict[Variant, tuple[ExtractionRule, ...]] = {
    v: (BOXED, HASH_MARK, LAST_NUMBER) for v in Variant
}
RULES[Variant.MATH_500] = (BOXED, HASH_MARK)


def extract_final_answer(output: str, variant: Variant) -> str | None:
    """Return the raw final answer from a model completion.

    Rules are tried in priority order (boxed, ``####``, last number) and the
    first rule that matches wins. Within a rule the last occurrence is used.
    """
    for rule in RULES[variant]:
        raw = rule.find(output)
        if raw is not None and raw.strip():
            return raw.strip()
    return None


_CURRENCY = str.maketrans("", "", "$€£¥")
_LATEX_NOISE = re.compile(r"\\[!,;: ]|\\left|\\right|\\displaystyle")
_TEXT_WRAP = re.compile(r"\\(?:text|textbf|mathrm|mbox)\{([^{}]*)\}")
_FRAC_RE = re.compile(r"^(-?)\\[dt]?frac\{(-?\d+)\}\{(-?\d+)\}$")
_SLASH_RE = re.compile(r"^(-?\d+)/(-?\d+)$")
_PLAIN_NUMBER_RE = re.compile(r"^-?(?:\d+(?:\.\d*)?|\.\d+)$")
_GROUPED_RE = re.compile(r"^-?\d[\d,]*(?:\.\d+)?$")


def _render(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def _as_fraction(s: str) -> Fraction | None:
    if _GROUPED_RE.match(s):
        s = s.replace(",", "")
    if _PLAIN_NUMBER_RE.match(s):
        return Fraction(s.rstrip(".") or "0")
    m = _SLASH_RE.match(s)
    if m and int(m.group(2)) != 0:
        return Fraction(int(m.group(1)), int(m.group(2)))
    m = _FRAC_RE.match(s)
    if m and int(m.group(3)) != 0:
        value = Fraction(int(m.group(2)), int(m.group(3)))
        return -value if m.group(1) else value
    return None


def _strip_wrappers(s: str) -> str:
    s = s.strip()
    while True:
        before = s
        s = s.strip().strip("$").strip()
        if s.startswith("\\(") and s.endswith("\\)"):
            s = s[2:-2]
        if s.endswith("."):
            s = s[:-1]
        if s.startswith("{") and s.endswith("}") and _balanced(s[1:-1]):
            s = s[1:-1]
        if s == before:
            return s


def _balanced(s: str) -> bool:
    depth = 0
    for ch in s:
        depth += {"{": 1, "}": -1}.get(ch, 0)
        if depth < 0:
            return False
    return depth == 0


def normalize(raw: str) -> GoldAnswer:
    """Normalize a raw answer string.

    Numeric forms (integers, decimals, ``a/b``, ``\\frac{a}{b}``, thousands
    separators, currency marks) become an exact rational whose canonical text is
    an integer or reduced fraction. Everything else is kept as an expression
    with whitespace, LaTeX spacing and redundant outer braces removed.
    """
    s = raw.replace("\\$", "").translate(_CURRENCY)
    s = _TEXT_WRAP.sub(r"\1", s)
    s = _LATEX_NOISE.sub("", s)
    s = s.replace("\\%", "").replace("%", "")
    s = _strip_wrappers(s)
    compact = re.sub(r"\s+", "", s)
    if not compact:
        raise UnparseableAnswer(f"empty answer after normalization: {raw!r}")
    value = _as_fraction(compact)
    if value is not None:
        return GoldAnswer(_render(value), value)
    # a bare number followed by a unit word ("14 bowls") still counts as numeric
    m = re.match(rf"^\s*({_NUMBER})\s+[A-Za-z][A-Za-z\s]*$", s)
    if m:
        value = _as_fraction(m.group(1))
        if value is not None:
            return GoldAnswer(_render(value), value)
    return GoldAnswer(compact, None)


def compare(candidate: GoldAnswer, gold: GoldAnswer) -> Verdict:
    if candidate.numeric is not None and gold.numeric is not None:
        same = candidate.numeric == gold.numeric
    else:
        same = candidate.canonical == gold.canonical
    return Verdict.CORRECT if same else Verdict.INCORRECT


def aime_valid(answer: GoldAnswer) -> bool:
    n = answer.numeric
    return n is not None and n.denominator == 1 and 0 <= n <= 999


@dataclass(frozen=True)
class Graded:
    extracted: str | None
    verdict: Verdict


def grade(output: str, gold: GoldAnswer, variant: Variant) -> Graded:
    """Extract, normalize and compare one model output against the gold answer."""
    raw = extract_final_answer(output, variant)
    if raw is None:
        return Graded(None, Verdict.UNPARSEABLE)
    try:
        candidate = normalize(raw)
    except UnparseableAnswer:
        return Graded(None, Verdict.UNPARSEABLE)
    if variant is Variant.AIME_2025 and not aime_valid(candidate):
        return Graded(candidate.canonical, Verdict.INCORRECT)
    return Graded(candidate.canonical, compare(candidate, gold))
