"""LLM layer: message shapes, scripted and wire completion, routing, pricing."""

from __future__ import annotations

import json

import httpx
import pytest

from agentrt.llm import (
    CompletionTimeout,
    ImagePart,
    InvalidToolJson,
    LLMProfile,
    LLMResponse,
    MalformedResponse,
    Message,
    ProviderError,
    RouterProfile,
    ScriptExhausted,
    ScriptedReply,
    ScriptedToolCall,
    TextPart,
    ToolCall,
    UnknownRouteKey,
    Usage,
    UsagePricing,
    complete,
    iter_text,
    multimodal_select,
    parse_tool_reply,
    pricing_for,
    record_usage,
    render_tool_call_block,
    render_tool_prompt,
    route_complete,
    select_profile,
    serialize_request,
)
from agentrt.state import ConversationStats

from conftest import scripted_llm


# --------------------------------------------------------------------------
# Message model


def test_tool_message_requires_call_id():
    with pytest.raises(ValueError):
        Message.text_message("tool", "result")
    ok = Message.text_message("tool", "result", tool_call_id="c1")
    assert ok.tool_call_id == "c1"


def test_only_assistant_messages_carry_tool_calls():
    call = ToolCall(id="c", name="bash", arguments={})
    with pytest.raises(ValueError):
        Message(role="user", tool_calls=(call,))
    ok = Message(role="assistant", tool_calls=(call,))
    assert ok.tool_calls == (call,)


def test_text_concatenates_only_text_parts():
    msg = Message(
        role="user",
        content=(TextPart(text="a"), ImagePart(url="u"), TextPart(text="b")),
    )
    assert msg.text() == "ab"
    assert msg.has_image
    assert not Message.text_message("user", "x").has_image


def test_iter_text_spans_messages():
    msgs = [Message.text_message("user", "one"), Message.text_message("user", "two")]
    assert list(iter_text(msgs)) == ["one", "two"]


# --------------------------------------------------------------------------
# Request serialization


def test_request_body_minimal():
    profile = LLMProfile(model="m1")
    body = serialize_request(profile, [Message.text_message("user", "hi")])
    assert body == {"model": "m1", "messages": [{"role": "user", "content": "hi"}]}


def test_request_body_carries_sampling_and_tools():
    profile = LLMProfile(model="m1", temperature=0.2, max_output_tokens=100)
    tools = [{"type": "function", "function": {"name": "bash", "parameters": {}}}]
    body = serialize_request(profile, [Message.text_message("user", "hi")], tools)
    assert body["temperature"] == 0.2
    assert body["max_tokens"] == 100
    assert body["tools"] == tools


def test_image_content_uses_part_array():
    profile = LLMProfile(model="m1")
    msg = Message(
        role="user",
        content=(TextPart(text="look"), ImagePart(url="data:image/png;base64,AA==")),
    )
    body = serialize_request(profile, [msg])
    assert body["messages"][0]["content"] == [
        {"type": "text", "text": "look"},
        {"type": "image_url", "image_url": {"url": "data:image/png;base64,AA=="}},
    ]


def test_assistant_tool_calls_on_the_wire_are_function_style():
    profile = LLMProfile(model="m1")
    msg = Message(
        role="assistant",
        tool_calls=(ToolCall(id="c1", name="bash", arguments={"command": "ls"}),),
    )
    body = serialize_request(profile, [msg])
    wire = body["messages"][0]["tool_calls"][0]
    assert wire["id"] == "c1"
    assert wire["type"] == "function"
    assert wire["function"]["name"] == "bash"
    assert json.loads(wire["function"]["arguments"]) == {"command": "ls"}


# --------------------------------------------------------------------------
# Scripted completion


def test_scripted_cursor_walks_the_script():
    profile = scripted_llm(ScriptedReply(text="one"), ScriptedReply(text="two"))
    assert complete(profile, [Message.text_message("user", "a")]).message.text() == "one"
    assert complete(profile, [Message.text_message("user", "b")]).message.text() == "two"
    with pytest.raises(ScriptExhausted):
        complete(profile, [Message.text_message("user", "c")])


def test_scripted_call_index_is_replayable():
    profile = scripted_llm(ScriptedReply(text="one"), ScriptedReply(text="two"))
    msgs = [Message.text_message("user", "x")]
    assert complete(profile, msgs, call_index=1).message.text() == "two"
    assert complete(profile, msgs, call_index=1).message.text() == "two"
    assert complete(profile, msgs, call_index=0).message.text() == "one"
    with pytest.raises(ScriptExhausted):
        complete(profile, msgs, call_index=5)


def test_scripted_profile_records_request_bodies():
    profile = scripted_llm(ScriptedReply(text="ok"))
    messages = [Message.text_message("user", "payload-marker")]
    complete(profile, messages)
    assert len(profile.request_transcript) == 1
    body = profile.request_transcript[0]
    assert body["messages"] == [{"role": "user", "content": "payload-marker"}]


def test_scripted_tool_reply_native_mode():
    profile = scripted_llm(
        ScriptedReply(
            text="running it",
            tool_calls=(
                ScriptedToolCall(name="bash", arguments={"command": "ls"}, id="fixed"),
            ),
        )
    )
    response = complete(profile, [Message.text_message("user", "go")])
    assert response.finish_reason == "tool_calls"
    assert response.message.text() == "running it"
    (call,) = response.message.tool_calls
    assert (call.id, call.name, call.arguments) == ("fixed", "bash", {"command": "ls"})


def test_scripted_tool_call_without_id_gets_one():
    profile = scripted_llm(
        ScriptedReply(tool_calls=(ScriptedToolCall(name="bash", arguments={}),))
    )
    response = complete(profile, [Message.text_message("user", "go")])
    assert response.message.tool_calls[0].id.startswith("call_")


def test_scripted_error_injection():
    profile = scripted_llm(ScriptedReply(raise_error="provider melted"))
    with pytest.raises(ProviderError, match="provider melted"):
        complete(profile, [Message.text_message("user", "go")])


def test_scripted_usage_flows_through():
    profile = scripted_llm(ScriptedReply(text="ok", prompt_tokens=11, completion_tokens=7))
    response = complete(profile, [Message.text_message("user", "go")])
    assert response.usage == Usage(prompt_tokens=11, completion_tokens=7)
    assert response.model == "scripted-test"


# --------------------------------------------------------------------------
# Prompt-based (non-native) tool calling


def test_render_tool_prompt_lists_each_tool():
    tools = [
        {
            "type": "function",
            "function": {
                "name": "bash",
                "description": "run a command",
                "parameters": {"type": "object", "properties": {}},
            },
        }
    ]
    prompt = render_tool_prompt(tools)
    assert "### bash" in prompt
    assert "run a command" in prompt
    assert "```tool_call" in prompt


def test_parse_tool_reply_extracts_block_and_thought():
    text = 'checking first\n```tool_call\n{"name": "bash", "arguments": {"command": "ls"}}\n```\ntrailing'
    thought, call = parse_tool_reply(text)
    assert thought.startswith("checking first")
    assert thought.endswith("trailing")
    assert call is not None
    assert call.name == "bash"
    assert call.arguments == {"command": "ls"}
    assert call.id.startswith("call_")


def test_parse_tool_reply_without_block_is_plain_text():
    thought, call = parse_tool_reply("nothing to run")
    assert thought == "nothing to run"
    assert call is None


@pytest.mark.parametrize(
    "body",
    [
        "not json",
        '["name", "bash"]',
        '{"arguments": {}}',
        '{"name": 5}',
    ],
)
def test_parse_tool_reply_rejects_bad_blocks(body):
    with pytest.raises(InvalidToolJson):
        parse_tool_reply(f"```tool_call\n{body}\n```")


def test_parse_tool_reply_missing_arguments_defaults_empty():
    _, call = parse_tool_reply('```tool_call\n{"name": "finish"}\n```')
    assert call is not None
    assert call.arguments == {}


def test_round_trip_render_then_parse():
    call = ToolCall(id="c", name="file", arguments={"op": "read", "path": "a.txt"})
    thought, parsed = parse_tool_reply(render_tool_call_block(call))
    assert thought == ""
    assert parsed is not None
    assert parsed.name == call.name
    assert parsed.arguments == call.arguments
    assert parsed.id == "c"  # the block carries identity through the downgrade


def test_downgraded_request_has_no_tools_key_and_augmented_system():
    profile = LLMProfile(model="m1", native_tool_calling=False)
    tools = [
        {
            "type": "function",
            "function": {"name": "bash", "parameters": {"type": "object", "properties": {}}},
        }
    ]
    messages = [
        Message.text_message("system", "base prompt"),
        Message.text_message("user", "hi"),
        Message(
            role="assistant",
            content=(TextPart(text="thinking"),),
            tool_calls=(ToolCall(id="c1", name="bash", arguments={"command": "ls"}),),
        ),
        Message.text_message("tool", "file listing", tool_call_id="c1"),
    ]
    body = serialize_request(profile, messages, tools)
    assert "tools" not in body
    wire = body["messages"]
    assert wire[0]["role"] == "system"
    assert wire[0]["content"].startswith("base prompt")
    assert "### bash" in wire[0]["content"]
    assert wire[2]["role"] == "assistant"
    assert "```tool_call" in wire[2]["content"]
    assert "thinking" in wire[2]["content"]
    assert "tool_calls" not in wire[2]
    assert wire[3]["role"] == "user"
    assert wire[3]["content"] == "Result of tool call c1:\nfile listing"


def test_downgrade_without_system_message_prepends_one():
    profile = LLMProfile(model="m1", native_tool_calling=False)
    tools = [{"type": "function", "function": {"name": "t", "parameters": {}}}]
    body = serialize_request(profile, [Message.text_message("user", "hi")], tools)
    assert body["messages"][0]["role"] == "system"
    assert "### t" in body["messages"][0]["content"]


def test_scripted_nonnative_reply_parses_to_equal_action():
    reply = ScriptedReply(
        text="about to look",
        tool_calls=(ScriptedToolCall(name="bash", arguments={"command": "pwd"}),),
    )
    native = scripted_llm(reply)
    nonnative = scripted_llm(reply, native_tool_calling=False)
    messages = [Message.text_message("user", "go")]
    native_response = complete(native, messages)
    nonnative_response = complete(nonnative, messages)
    n_call = native_response.message.tool_calls[0]
    p_call = nonnative_response.message.tool_calls[0]
    assert (n_call.name, n_call.arguments) == (p_call.name, p_call.arguments)
    assert nonnative_response.message.text() == "about to look"


# --------------------------------------------------------------------------
# Wire client (mock transport)


def _ok_payload(message: dict, model: str = "m-live") -> dict:
    return {
        "choices": [{"message": message, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 5, "completion_tokens": 9},
        "model": model,
    }


def test_wire_completion_parses_text_and_usage():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("Authorization")
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=_ok_payload({"role": "assistant", "content": "hello"}))

    profile = LLMProfile(model="m-live", base_url="https://llm.test/v1", api_key="sk-wire-key")
    response = complete(
        profile,
        [Message.text_message("user", "hi")],
        transport=httpx.MockTransport(handler),
    )
    assert response.message.text() == "hello"
    assert response.usage == Usage(prompt_tokens=5, completion_tokens=9)
    assert response.model == "m-live"
    assert seen["url"] == "https://llm.test/v1/chat/completions"
    assert seen["auth"] == "Bearer sk-wire-key"
    assert seen["body"]["model"] == "m-live"


def test_wire_completion_parses_function_tool_calls():
    payload = _ok_payload(
        {
            "role": "assistant",
            "content": None,
            "tool_calls": [
                {
                    "id": "c77",
                    "type": "function",
                    "function": {"name": "bash", "arguments": '{"command": "ls"}'},
                }
            ],
        }
    )
    payload["choices"][0]["finish_reason"] = "tool_calls"

    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json=payload)

    profile = LLMProfile(model="m-live")
    response = complete(
        profile,
        [Message.text_message("user", "hi")],
        transport=httpx.MockTransport(handler),
    )
    (call,) = response.message.tool_calls
    assert (call.id, call.name, call.arguments) == ("c77", "bash", {"command": "ls"})
    assert response.finish_reason == "tool_calls"


def test_wire_nonnative_parses_fenced_block_from_text():
    text = 'looking\n```tool_call\n{"name": "bash", "arguments": {"command": "ls"}}\n```'

    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json=_ok_payload({"role": "assistant", "content": text}))

    profile = LLMProfile(model="m-live", native_tool_calling=False)
    response = complete(
        profile,
        [Message.text_message("user", "hi")],
        transport=httpx.MockTransport(handler),
    )
    (call,) = response.message.tool_calls
    assert call.name == "bash"
    assert response.message.text() == "looking"


def test_wire_http_error_maps_to_provider_error():
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(500, text="overloaded")

    profile = LLMProfile(model="m-live")
    with pytest.raises(ProviderError, match="500"):
        complete(
            profile,
            [Message.text_message("user", "hi")],
            transport=httpx.MockTransport(handler),
        )


def test_wire_timeout_maps_to_completion_timeout():
    def handler(request: httpx.Request) -> httpx.Response:
        raise httpx.ConnectTimeout("slow", request=request)

    profile = LLMProfile(model="m-live")
    with pytest.raises(CompletionTimeout):
        complete(
            profile,
            [Message.text_message("user", "hi")],
            transport=httpx.MockTransport(handler),
        )


@pytest.mark.parametrize(
    "payload",
    [
        {"choices": []},
        {"choices": [{"message": {"role": "assistant", "content": ["odd"]}}]},
        {"choices": [{"message": {"tool_calls": [{"function": {}}]}}]},
    ],
)
def test_wire_malformed_bodies_raise(payload):
    def handler(request: httpx.Request) -> httpx.Response:
        return httpx.Response(200, json=payload)

    profile = LLMProfile(model="m-live")
    with pytest.raises(MalformedResponse):
        complete(
            profile,
            [Message.text_message("user", "hi")],
            transport=httpx.MockTransport(handler),
        )


def test_api_key_never_appears_in_profile_dump():
    profile = LLMProfile(model="m", api_key="sk-very-secret")
    dumped = profile.model_dump_json()
    assert "sk-very-secret" not in dumped


# --------------------------------------------------------------------------
# Routing


def _router(**overrides) -> RouterProfile:
    params = {
        "llms_for_routing": {
            "primary": scripted_llm(ScriptedReply(text="from primary"), model="model-a"),
            "secondary": scripted_llm(ScriptedReply(text="from secondary"), model="model-b"),
        }
    }
    params.update(overrides)
    return RouterProfile(**params)


def test_multimodal_select_picks_primary_iff_image():
    text_only = [Message.text_message("user", "plain")]
    with_image = [
        Message.text_message("user", "plain"),
        Message(role="user", content=(ImagePart(url="u"),)),
    ]
    assert multimodal_select(text_only) == "secondary"
    assert multimodal_select(with_image) == "primary"


def test_select_profile_returns_key_and_profile():
    router = _router()
    key, profile = select_profile(router, [Message.text_message("user", "x")])
    assert key == "secondary"
    assert profile.model == "model-b"


def test_unknown_route_key_raises():
    router = _router(llms_for_routing={"secondary": scripted_llm(model="only")})
    with pytest.raises(UnknownRouteKey):
        select_profile(router, [Message(role="user", content=(ImagePart(url="u"),))])


def test_router_profile_validates_configuration():
    with pytest.raises(ValueError):
        RouterProfile(llms_for_routing={})
    with pytest.raises(ValueError):
        RouterProfile(router="nonexistent", llms_for_routing={"a": scripted_llm()})


def test_route_complete_reports_key_and_matches_direct_call():
    messages = [Message(role="user", content=(ImagePart(url="u"),))]
    router = _router()
    key, routed = route_complete(router, messages)
    assert key == "primary"
    direct = complete(router.llms_for_routing["primary"], messages, call_index=0)
    assert routed == direct


def test_complete_on_router_dispatches_through_selection():
    router = _router()
    response = complete(router, [Message.text_message("user", "x")])
    assert response.message.text() == "from secondary"


# --------------------------------------------------------------------------
# Usage accounting


def test_record_usage_hand_computed_cost():
    pricing = UsagePricing(prompt_usd_per_mtok=3.0, completion_usd_per_mtok=15.0)
    profile = LLMProfile(model="m-priced", usage_pricing=pricing)
    response = LLMResponse(
        message=Message.text_message("assistant", "x"),
        usage=Usage(prompt_tokens=1234, completion_tokens=567),
        model="m-priced",
    )
    stats = record_usage(ConversationStats(), response, profile)
    # 1234 * 3 / 1e6 + 567 * 15 / 1e6 = 0.003702 + 0.008505
    assert stats.total_cost == pytest.approx(0.012207, rel=1e-12)
    assert stats.prompt_tokens == 1234
    assert stats.completion_tokens == 567
    assert stats.llm_calls == 1


def test_record_usage_accumulates_and_counts_every_call():
    profile = LLMProfile(model="m")  # no pricing configured
    response = LLMResponse(
        message=Message.text_message("assistant", "x"),
        usage=Usage(prompt_tokens=10, completion_tokens=5),
        model="m",
    )
    stats = ConversationStats()
    for _ in range(3):
        stats = record_usage(stats, response, profile)
    assert stats.prompt_tokens == 30
    assert stats.completion_tokens == 15
    assert stats.total_cost == 0.0
    assert stats.llm_calls == 3


def test_router_pricing_is_looked_up_by_model():
    priced = LLMProfile(
        model="model-a",
        usage_pricing=UsagePricing(prompt_usd_per_mtok=1.0, completion_usd_per_mtok=2.0),
        scripted_responses=(),
    )
    router = RouterProfile(
        llms_for_routing={"primary": priced, "secondary": scripted_llm(model="model-b")}
    )
    assert pricing_for(router, "model-a") == priced.usage_pricing
    assert pricing_for(router, "model-b") is None
    response = LLMResponse(
        message=Message.text_message("assistant", "x"),
        usage=Usage(prompt_tokens=1_000_000, completion_tokens=500_000),
        model="model-a",
    )
    stats = record_usage(ConversationStats(), response, router)
    assert stats.total_cost == pytest.approx(2.0, rel=1e-12)
