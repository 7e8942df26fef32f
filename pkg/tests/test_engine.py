from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import answer_text, make_question, reply
from mapsbench.domain import ModelRate, StrategyKind, StrategySpec, TokenUsage, Verdict, validate_trace
from mapsbench.engine import AttemptFailed, EngineConfig, provider_call_count, run_attempt
from mapsbench.prompts import PromptForge, Purpose, default_exemplars
from mapsbench.providers import Decoding, ProviderError, ScriptedProvider
from mapsbench.providers.base import ScriptExhausted

SHOTS = default_exemplars()


def cfg(kind, layers=None, **kw):
    spec = StrategySpec.for_variant(kind, make_question().variant, max_layers=layers, exemplars=SHOTS)
    return EngineConfig(spec, **kw)


def run(kind, replies, layers=None, question=None, **kw):
    q = question or make_question()
    provider = ScriptedProvider({q.id: replies})
    return run_attempt(q, cfg(kind, layers), provider, **kw), provider


def test_worked_trajectory(worked_script):
    trace, provider = run("MAPS", worked_script, layers=3)
    assert [l.verdict for l in trace.layers] == [Verdict.INCORRECT, Verdict.INCORRECT, Verdict.CORRECT]
    assert trace.final_verdict is Verdict.CORRECT and trace.reflections_used == 2
    assert [i.purpose for i in provider.log] == [
        Purpose.INITIAL, Purpose.META_PROMPT_REQUEST, Purpose.REFLECTION,
        Purpose.META_PROMPT_REQUEST, Purpose.REFLECTION,
    ]
    assert trace.layers[1].reflection_prompt == worked_script[1].text
    # the meta call's tokens belong to the layer it serves
    assert trace.layers[1].usage == worked_script[1].usage + worked_script[2].usage
    assert trace.total_usage == TokenUsage.sum(r.usage for r in worked_script)
    assert validate_trace(trace, make_question().gold) == []


def test_layer_two_meta_prompt_sees_both_wrong_answers(worked_script):
    _, provider = run("MAPS", worked_script, layers=3)
    second_meta = provider.log[3].prompt
    assert second_meta.count("Extracted final answer: 7") == 2


def test_cot_stops_after_initial(worked_script):
    trace, provider = run("CoT", worked_script)
    assert len(trace.layers) == 1 and trace.final_verdict is Verdict.INCORRECT
    assert len(provider.log) == 1


def test_maps_one_layer_stops_even_when_wrong(worked_script):
    trace, provider = run("MAPS", worked_script, layers=1)
    assert [l.verdict for l in trace.layers] == [Verdict.INCORRECT, Verdict.INCORRECT]
    assert len(provider.log) == 3


def test_correct_initial_answer_exits_immediately():
    trace, provider = run("MAPS", [reply(answer_text("14"))], layers=3)
    assert len(trace.layers) == 1 and len(provider.log) == 1


def test_always_wrong_maps_makes_seven_calls():
    replies = [reply(answer_text("7")) if i % 2 == 0 else reply("meta") for i in range(7)]
    trace, provider = run("MAPS", replies, layers=3)
    assert len(trace.layers) == 4 and trace.final_verdict is Verdict.INCORRECT
    assert len(provider.log) == 7 == provider_call_count(trace.strategy, trace.reflections_used)


def test_sr_uses_static_reflection():
    trace, provider = run("SR", [reply(answer_text("7")), reply(answer_text("14"))])
    assert trace.final_verdict is Verdict.CORRECT and len(provider.log) == 2
    assert provider.log[1].purpose is Purpose.REFLECTION
    assert trace.layers[1].reflection_prompt in provider.log[1].prompt


def test_unparseable_continues_the_loop():
    trace, _ = run("SR", [reply("I cannot decide."), reply(answer_text("14"))])
    assert [l.verdict for l in trace.layers] == [Verdict.UNPARSEABLE, Verdict.CORRECT]


def test_empty_meta_reply_falls_back_to_static():
    trace, provider = run("MAPS", [reply(answer_text("7")), reply("   "), reply(answer_text("14"))], layers=2)
    assert trace.layers[1].fallback_static
    assert trace.final_verdict is Verdict.CORRECT
    assert trace.layers[1].reflection_prompt == PromptForge().static_instruction
    assert trace.layers[1].reflection_prompt in provider.log[2].prompt


def test_empty_model_output_still_reflects():
    trace, provider = run("SR", [reply(""), reply(answer_text("14"))])
    assert trace.layers[0].verdict is Verdict.UNPARSEABLE
    assert trace.final_verdict is Verdict.CORRECT


def test_decoding_forwarded_to_every_call(worked_script):
    q = make_question()
    provider = ScriptedProvider({q.id: worked_script})
    run_attempt(q, cfg("MAPS", 3, decoding=Decoding(0.0, 1.0)), provider)
    assert {i.decoding for i in provider.log} == {Decoding(0.0, 1.0)}


def test_cost_attached(worked_script):
    rate = ModelRate(Decimal("0.15"), Decimal("0.60"))
    trace, _ = run("MAPS", worked_script, layers=3, rate=rate)
    assert trace.total_cost_usd == rate.cost(trace.total_usage)


def test_layer_cap_enforced():
    with pytest.raises(ValueError):
        EngineConfig(StrategySpec(StrategyKind.MAPS, 4))
    assert EngineConfig(StrategySpec(StrategyKind.MAPS, 4), layer_cap=4).max_layers == 4


def test_provider_failure_is_attempt_failure():
    class Broken:
        model_id = "broken"

        def complete(self, bundle, decoding, *, question_id=""):
            raise ProviderError("down", model_id="broken", question_id=question_id, attempts=3)

    with pytest.raises(AttemptFailed) as info:
        run_attempt(make_question(), cfg("CoT"), Broken())
    assert info.value.layers_done == 0 and info.value.cause.attempts == 3


def test_over_consumption_surfaces():
    with pytest.raises(ScriptExhausted):
        run("SR", [reply(answer_text("7"))])


@pytest.mark.parametrize(
    "kind, layers, reflections, calls",
    [("CoT", 0, 0, 1), ("Baseline", 0, 0, 1), ("SR", 1, 1, 2), ("SR", 1, 0, 1), ("MAPS", 3, 2, 5), ("MAPS", 1, 1, 3)],
)
def test_provider_call_count(kind, layers, reflections, calls):
    assert provider_call_count(StrategySpec(StrategyKind(kind), layers), reflections) == calls


def test_provider_call_count_rejects_impossible():
    with pytest.raises(ValueError):
        provider_call_count(StrategySpec(StrategyKind.SR, 1), 2)


outcome = st.sampled_from(["7", "14", "garbled"])


def _text(o):
    return "no answer here" if o == "garbled" else answer_text(o)


@settings(max_examples=300, deadline=None)
@given(
    st.sampled_from([("Baseline", None), ("CoT", None), ("SR", None), ("MAPS", 1), ("MAPS", 2), ("MAPS", 3)]),
    st.lists(outcome, min_size=4, max_size=4),
    st.lists(st.tuples(st.integers(0, 5000), st.integers(0, 5000)), min_size=7, max_size=7),
    st.booleans(),
)
def test_engine_invariants(strategy, answers, usages, empty_meta):
    kind, layers = strategy
    replies = []
    for i in range(4):
        replies.append(reply(_text(answers[i]), *usages[2 * i]))
        if i < 3:
            replies.append(reply("" if empty_meta else f"meta {i}", *usages[2 * i + 1]))
    if kind != "MAPS":
        replies = [r for i, r in enumerate(replies) if i % 2 == 0]
    trace, provider = run(kind, replies, layers=layers)
    assert validate_trace(trace, make_question().gold) == []
    # early exit: nothing runs after the first correct layer
    verdicts = [l.verdict for l in trace.layers]
    assert Verdict.CORRECT not in verdicts[:-1]
    first_correct = next((i for i, a in enumerate(answers) if a == "14"), None)
    cap = trace.strategy.max_layers
    expected_layers = min(cap, first_correct) + 1 if first_correct is not None else cap + 1
    assert len(trace.layers) == expected_layers
    assert len(trace.layers) <= {"SR": 2, "MAPS": 4}.get(kind, 1)
    assert len(provider.log) == provider_call_count(trace.strategy, trace.reflections_used)
    assert trace.total_usage == TokenUsage.sum(r.usage for r in replies[: len(provider.log)])
    # determinism
    again, _ = run(kind, replies, layers=layers)
    assert again == trace
