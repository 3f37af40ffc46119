"""Condenser: trigger, span selection with pair integrity, summarizer calls."""

from __future__ import annotations

import pytest

from agentrt.condenser import (
    CondenserPolicy,
    SummarizerFailure,
    condense,
    select_forgotten,
    should_condense,
)
from agentrt.events import (
    ActionEvent,
    AgentErrorEvent,
    MessageEvent,
    ObservationEvent,
    SystemPromptEvent,
    apply_condensations,
)
from agentrt.llm import ScriptedReply
from agentrt.state import ConversationStats
from agentrt.llm import record_usage

from conftest import scripted_llm


def _msg(text: str, role: str = "user") -> MessageEvent:
    return MessageEvent.model_validate(
        {"source": "user", "role": role, "content": [{"type": "text", "text": text}]}
    )


def _action(call_id: str) -> ActionEvent:
    return ActionEvent(
        source="agent", tool_name="bash", tool_call_id=call_id, arguments={}
    )


def _obs(call_id: str) -> ObservationEvent:
    return ObservationEvent(
        source="environment", tool_call_id=call_id, tool_name="bash", llm_text="ok"
    )


def _chat(n: int) -> list[MessageEvent]:
    return [_msg(f"m{i}") for i in range(n)]


# --------------------------------------------------------------------------
# Policy and trigger


def test_policy_rejects_budget_overflow():
    with pytest.raises(ValueError):
        CondenserPolicy(max_view_events=10, keep_head=5, keep_tail=5)
    CondenserPolicy(max_view_events=11, keep_head=5, keep_tail=5)


def test_policy_defaults():
    policy = CondenserPolicy()
    assert policy.max_view_events == 80
    assert policy.keep_head == 4
    assert policy.keep_tail == 20


def test_should_condense_strictly_above_limit():
    policy = CondenserPolicy(max_view_events=10, keep_head=2, keep_tail=3)
    assert not should_condense(policy, _chat(10))
    assert should_condense(policy, _chat(11))


# --------------------------------------------------------------------------
# Span selection


def test_selection_keeps_head_and_tail():
    policy = CondenserPolicy(max_view_events=10, keep_head=2, keep_tail=3)
    view = _chat(12)
    forgotten = select_forgotten(policy, view)
    assert [e.id for e in forgotten] == [e.id for e in view[2:9]]


def test_selection_empty_when_nothing_between():
    policy = CondenserPolicy(max_view_events=10, keep_head=4, keep_tail=5)
    assert select_forgotten(policy, _chat(9)) == []
    assert select_forgotten(policy, _chat(8)) == []


def test_head_boundary_pulls_action_into_span():
    # Index:   0        1          2        3..
    # Events:  msg      action     obs      msgs...
    # keep_head=2 would split the pair; the action at 1 must be forgotten.
    policy = CondenserPolicy(max_view_events=8, keep_head=2, keep_tail=3)
    view = [_msg("m0"), _action("c1"), _obs("c1")] + _chat(7)
    forgotten = select_forgotten(policy, view)
    ids = [e.id for e in forgotten]
    assert view[1].id in ids  # the action came along
    assert view[2].id in ids
    assert view[0].id not in ids


def test_tail_boundary_pulls_observation_into_span():
    # The observation sits in the kept tail while its action would be
    # forgotten; the span must widen to swallow the observation too.
    policy = CondenserPolicy(max_view_events=8, keep_head=1, keep_tail=3)
    view = _chat(4) + [_action("c9")] + [_obs("c9"), _msg("t1"), _msg("t2")]
    # len=8: start=1, end=5; view[4] is the action, obs at 5 in tail.
    forgotten = select_forgotten(policy, view)
    ids = [e.id for e in forgotten]
    assert view[4].id in ids
    assert view[5].id in ids
    assert view[6].id not in ids


def test_agent_error_with_call_id_counts_as_pair_member():
    policy = CondenserPolicy(max_view_events=8, keep_head=1, keep_tail=3)
    error = AgentErrorEvent(source="environment", error="x", tool_call_id="c9")
    view = _chat(4) + [_action("c9")] + [error, _msg("t1"), _msg("t2")]
    forgotten = select_forgotten(policy, view)
    ids = [e.id for e in forgotten]
    assert view[4].id in ids
    assert error.id in ids


def test_system_prompt_always_survives():
    policy = CondenserPolicy(max_view_events=6, keep_head=0, keep_tail=2)
    prompt = SystemPromptEvent(source="agent", prompt="rules")
    view = [prompt] + _chat(8)
    forgotten = select_forgotten(policy, view)
    assert prompt.id not in [e.id for e in forgotten]
    assert len(forgotten) > 0


def test_no_pair_is_ever_split_randomized():
    policy = CondenserPolicy(max_view_events=12, keep_head=3, keep_tail=4)
    # Alternating chat and paired tool traffic.
    view = []
    for i in range(9):
        view.append(_msg(f"m{i}"))
        view.append(_action(f"c{i}"))
        view.append(_obs(f"c{i}"))
    forgotten_ids = {e.id for e in select_forgotten(policy, view)}
    by_call = {}
    for event in view:
        if isinstance(event, (ActionEvent, ObservationEvent)):
            by_call.setdefault(event.tool_call_id, []).append(event.id in forgotten_ids)
    for call_id, flags in by_call.items():
        assert len(set(flags)) == 1, f"pair {call_id} was split"


# --------------------------------------------------------------------------
# condense()


def test_condense_produces_foldable_event():
    policy = CondenserPolicy(
        max_view_events=8,
        keep_head=2,
        keep_tail=3,
        summarizer_llm=scripted_llm(ScriptedReply(text="it was all setup")),
    )
    view = _chat(12)
    condensation, response = condense(policy, view)
    assert condensation is not None
    assert response is not None
    assert condensation.summary == "it was all setup"
    assert condensation.anchor_id == view[2].id
    assert condensation.forgotten_event_ids == tuple(e.id for e in view[2:9])
    folded = apply_condensations(list(view) + [condensation])
    assert len(folded) == 12 - 7 + 1
    kinds = [e.kind for e in folded]
    assert kinds[2] == "condensation_summary"


def test_condense_counts_usage_via_record():
    summarizer = scripted_llm(
        ScriptedReply(text="short", prompt_tokens=50, completion_tokens=10)
    )
    policy = CondenserPolicy(
        max_view_events=8, keep_head=2, keep_tail=3, summarizer_llm=summarizer
    )
    _, response = condense(policy, _chat(12))
    stats = record_usage(ConversationStats(), response, summarizer)
    assert stats.prompt_tokens == 50
    assert stats.completion_tokens == 10
    assert stats.llm_calls == 1


def test_condense_nothing_to_forget_returns_none():
    policy = CondenserPolicy(
        max_view_events=20,
        keep_head=4,
        keep_tail=10,
        summarizer_llm=scripted_llm(ScriptedReply(text="unused")),
    )
    condensation, response = condense(policy, _chat(10))
    assert condensation is None
    assert response is None


def test_condense_uses_fallback_when_unset():
    policy = CondenserPolicy(max_view_events=8, keep_head=2, keep_tail=3)
    fallback = scripted_llm(ScriptedReply(text="from fallback"))
    condensation, _ = condense(policy, _chat(12), fallback_llm=fallback)
    assert condensation is not None
    assert condensation.summary == "from fallback"


def test_condense_without_any_model_fails():
    policy = CondenserPolicy(max_view_events=8, keep_head=2, keep_tail=3)
    with pytest.raises(SummarizerFailure):
        condense(policy, _chat(12))


def test_condense_wraps_model_failure():
    policy = CondenserPolicy(
        max_view_events=8,
        keep_head=2,
        keep_tail=3,
        summarizer_llm=scripted_llm(ScriptedReply(raise_error="model down")),
    )
    with pytest.raises(SummarizerFailure, match="model down"):
        condense(policy, _chat(12))


def test_condense_rejects_empty_summary():
    policy = CondenserPolicy(
        max_view_events=8,
        keep_head=2,
        keep_tail=3,
        summarizer_llm=scripted_llm(ScriptedReply(text="   ")),
    )
    with pytest.raises(SummarizerFailure, match="empty"):
        condense(policy, _chat(12))


def test_summarizer_request_contains_event_digest():
    summarizer = scripted_llm(ScriptedReply(text="ok"))
    policy = CondenserPolicy(
        max_view_events=8, keep_head=2, keep_tail=3, summarizer_llm=summarizer
    )
    view = _chat(12)
    condense(policy, view)
    (request,) = summarizer.request_transcript
    user_text = request["messages"][1]["content"]
    assert "m2" in user_text  # first forgotten message made it to the prompt
    assert "m11" not in user_text  # kept tail did not
