from __future__ import annotations

import json
from pathlib import Path

import pytest
import yaml

from mapsbench.codec import normalize
from mapsbench.domain import Question, TokenUsage, Variant
from mapsbench.providers import ScriptedReply

DATA = Path(__file__).parent / "data"

BOWLS = (
    "A caterer has 50 soup bowls to fill for a banquet. She already filled 21 bowls in the kitchen "
    "and another 15 at the buffet table. How many more bowls does she still need to fill?"
)


def make_question(qid: str = "gsm8k:bowls", body: str = BOWLS, gold: str = "14",
                  variant: Variant = Variant.GSM8K) -> Question:
    return Question(qid, body, normalize(gold), variant)


def reply(text: str, prompt_tokens: int = 0, completion_tokens: int = 0) -> ScriptedReply:
    return ScriptedReply(text, TokenUsage(prompt_tokens, completion_tokens))


def answer_text(value: str) -> str:
    return f"Step by step working.\nThe answer is {value}.\n#### {value}"


@pytest.fixture
def bowls() -> Question:
    return make_question()


@pytest.fixture
def worked_script() -> list[ScriptedReply]:
    """Initial 7, meta text, 7, meta text, 14 with distinct usages per call."""
    return [
        reply(answer_text("7"), 410, 120),
        reply("Recount what was already filled, then subtract from the total.", 900, 60),
        reply(answer_text("7"), 620, 140),
        reply("You added the two filled counts wrong last time. Add 21 and 15 first.", 1100, 70),
        reply(answer_text("14"), 700, 150),
    ]


# -- experiment directories ---------------------------------------------------

STRATEGIES = [{"kind": "Baseline"}, {"kind": "CoT"}, {"kind": "SR"},
              {"kind": "MAPS", "max_layers": 1}, {"kind": "MAPS", "max_layers": 3}]


def first_correct(i: int) -> int | None:
    """Layer at which scripted question ``i`` is first answered correctly (None = never)."""
    return [0, 1, 2, 3, None][i % 5]


def script_for(qid: str, i: int, gold: int) -> list[dict]:
    """Seven replies: answers at even ordinals, meta text at odd ones."""
    hit = first_correct(i)
    out = []
    for layer in range(4):
        value = gold if hit == layer else gold + 1 + layer
        out.append({"question_id": qid, "ordinal": 2 * layer, "text": answer_text(str(value)),
                    "prompt_tokens": 300 + 17 * i + layer, "completion_tokens": 90 + 3 * i + layer})
        if layer < 3:
            out.append({"question_id": qid, "ordinal": 2 * layer + 1,
                        "text": f"Layer {layer + 1}: recheck each quantity in question {i}.",
                        "prompt_tokens": 800 + i, "completion_tokens": 40 + layer})
    return out


def make_experiment(root, *, n_questions=100, runs=5, sample_size=100, strategies=STRATEGIES,
                    provider="scripted", parallel=1, seed=2024, prices=None, extra_models=()):
    root.mkdir(parents=True, exist_ok=True)
    records, script = [], []
    for i in range(n_questions):
        gold = 10 + i
        records.append({"id": f"q{i:03d}", "question": f"Question {i}: what is {gold - 3} plus 3?",
                        "answer": f"{gold - 3} + 3 = {gold}\n#### {gold}"})
        script.extend(script_for(f"gsm8k:q{i:03d}", i, gold))
    (root / "gsm8k.jsonl").write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    (root / "script.jsonl").write_text("".join(json.dumps(r) + "\n" for r in script), encoding="utf-8")
    sheet = prices if prices is not None else {"model-a": {"input": "0.15", "output": "0.60"}}
    (root / "prices.yaml").write_text(yaml.safe_dump(sheet), encoding="utf-8")
    model = {"id": "model-a", "provider": provider}
    if provider == "scripted":
        model["script"] = "script.jsonl"
    config = {
        "name": "test",
        "output_dir": "out",
        "seed": seed,
        "parallel": parallel,
        "prices": "prices.yaml",
        "sample": {"runs": runs, "sample_size": sample_size},
        "corpora": [{"path": "gsm8k.jsonl", "variant": "gsm8k"}],
        "models": [model, *extra_models],
        "strategies": strategies,
    }
    path = root / "experiment.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    return path
