"""Benchmark loading and the seeded sampling protocol.

Input files are JSON Lines:

* GSM8K / GSM-Symbolic: ``question``, ``answer`` (worked solution ending in ``#### n``)
* MATH 500: ``problem``, ``answer``, ``subject``, ``level``
* AIME 2025: ``id``, ``problem``, ``answer``

Question ids are ``<variant>:<native id>``. Records without a native id get one
derived from their text, so ids (and therefore samples) do not depend on line
order.

Sampling uses SplitMix64 (Steele, Lea & Flood 2014) and a partial Fisher-Yates
shuffle over the sorted id list. Run ``r`` is seeded with output ``r + 1`` of a
SplitMix64 stream started at the plan seed. Both steps are a few lines in any
language, which keeps samples reproducible across implementations.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from .codec import UnparseableAnswer, aime_valid, normalize
from .domain import Dataset, Question, Variant

MASK64 = (1 << 64) - 1


class CorpusError(ValueError):
    """A data file could not be turned into questions."""

    def __init__(self, message: str, ids: Sequence[str] = ()):
        super().__init__(message)
        self.ids = list(ids)


class ProtocolDeviation(UserWarning):
    pass


@dataclass(frozen=True)
class CorpusManifest:
    dataset: Dataset
    variant: Variant
    source: str
    record_count: int
    sha256: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset.value,
            "variant": self.variant.value,
            "source": self.source,
            "record_count": self.record_count,
            "sha256": self.sha256,
        }


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _text_id(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _gsm_gold(answer: Any) -> str | None:
    if not isinstance(answer, str):
        return None
    parts = answer.split("####")
    if len(parts) != 2:
        return None
    return parts[1].strip() or None


def _record_id(rec: dict[str, Any], variant: Variant, body: str) -> str:
    """``<variant>:<native id>``; GSM-Symbolic reuses native ids across its variants."""
    if variant is Variant.MATH_500 and rec.get("unique_id"):
        native = str(rec["unique_id"])
    elif rec.get("id") not in (None, ""):
        native = str(rec["id"])
        if rec.get("instance") is not None:
            native = f"{native}-{rec['instance']}"
    else:
        native = _text_id(body)
    return f"{variant.value}:{native}"


def parse_records(records: Iterable[dict[str, Any]], variant: Variant) -> list[Question]:
    questions: list[Question] = []
    bad: list[str] = []
    seen: dict[str, int] = {}
    for rec in records:
        body = rec.get("question") if variant.gsm_family else rec.get("problem")
        if not isinstance(body, str) or not body.strip():
            bad.append(str(rec.get("id", f"record#{len(questions) + len(bad)}")))
            continue
        qid = _record_id(rec, variant, body)
        raw = _gsm_gold(rec.get("answer")) if variant.gsm_family else rec.get("answer")
        try:
            if raw is None or str(raw).strip() == "":
                raise UnparseableAnswer("missing gold")
            gold = normalize(str(raw))
            if variant is Variant.AIME_2025 and not aime_valid(gold):
                raise UnparseableAnswer("AIME gold outside 0..999")
        except UnparseableAnswer:
            bad.append(qid)
            continue
        seen[qid] = seen.get(qid, 0) + 1
        questions.append(Question(qid, body, gold, variant))
    if bad:
        raise CorpusError(f"{len(bad)} record(s) with missing or ambiguous gold: {', '.join(bad)}", bad)
    dupes = sorted(qid for qid, n in seen.items() if n > 1)
    if dupes:
        raise CorpusError(f"duplicate question ids: {', '.join(dupes)}", dupes)
    return questions


def load_corpus(path: str | Path, variant: Variant | str, dataset: Dataset | str | None = None) -> list[Question]:
    variant = Variant(variant)
    if dataset is not None and Dataset(dataset) is not variant.dataset:
        raise CorpusError(f"variant {variant.value} does not belong to dataset {Dataset(dataset).value}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
    return parse_records(records, variant)


def manifest_for(path: str | Path, variant: Variant, questions: Sequence[Question]) -> CorpusManifest:
    return CorpusManifest(variant.dataset, variant, str(path), len(questions), file_digest(path))


# -- sampling -----------------------------------------------------------------


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection, free of modulo bias."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next()
            if x < limit:
                return x % n


def run_seed(seed: int, run_index: int) -> int:
    stream = SplitMix64(seed)
    value = 0
    for _ in range(run_index + 1):
        value = stream.next()
    return value


@dataclass(frozen=True)
class SamplePlan:
    runs: int
    sample_size: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def sample_ids(ids: Sequence[str], size: int, seed: int) -> list[str]:
    pool = sorted(ids)
    if size > len(pool):
        raise CorpusError(f"sample size {size} exceeds corpus size {len(pool)}")
    rng = SplitMix64(seed)
    for i in range(size):
        j = i + rng.below(len(pool) - i)
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:size]


def draw_samples(corpus: Sequence[Question], plan: SamplePlan) -> list[list[str]]:
    """One list of ``plan.sample_size`` distinct ids per run.

    Runs are drawn independently, so two runs may share questions.
    """
    ids = [q.id for q in corpus]
    if len(set(ids)) != len(ids):
        raise CorpusError("corpus ids are not unique")
    return [sample_ids(ids, plan.sample_size, run_seed(plan.seed, r)) for r in range(plan.runs)]


def full_set_plan(corpus: Sequence[Question], seed: int = 0) -> SamplePlan:
    """Single run over the whole corpus, the protocol for AIME 2025 and MATH 500."""
    if not corpus:
        raise CorpusError("empty corpus")
    variants = {q.variant for q in corpus}
    if any(v.gsm_family for v in variants):
        warnings.warn(
            "full-set evaluation of a GSM-family corpus; the protocol samples 5 x 100 instead",
            ProtocolDeviation,
            stacklevel=2,
        )
    return SamplePlan(runs=1, sample_size=len(corpus), seed=seed)
