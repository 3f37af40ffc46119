"""LLM access: messages, provider profiles, routing, and usage accounting.

The wire format follows the chat-completions convention (role/content
messages, function-style tool declarations).  Profiles come in two flavors:
a plain :class:`LLMProfile` pointing at one model, and a :class:`RouterProfile`
that picks between named sub-profiles per request.

Profiles can carry ``scripted_responses``, a list of canned provider replies.
A scripted profile never touches the network; it builds the exact request
body the wire client would send, records it on the profile's transcript, and
returns the next canned reply.  That makes whole conversations replayable
offline, which the test suite and the persistence/resume machinery lean on
heavily.

Models whose providers lack native tool calling are supported transparently:
set ``native_tool_calling=False`` and the same completion call renders tool
schemas into the prompt and parses a fenced ``tool_call`` block out of the
reply text.  Callers see identical tool calls either way.
"""

from __future__ import annotations

import json
import os
import re
import threading
from typing import (
    TYPE_CHECKING,
    Annotated,
    Any,
    Callable,
    Iterable,
    Literal,
    Mapping,
    Sequence,
    Union,
)

import httpx
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    JsonValue,
    PrivateAttr,
    SecretStr,
    model_validator,
)

from .errors import AgentRtError
from .ids import new_id

if TYPE_CHECKING:
    from .state import ConversationStats

DEFAULT_TIMEOUT_S = float(os.environ.get("AGENTRT_LLM_TIMEOUT", "60"))


class ProviderError(AgentRtError):
    """The provider returned an HTTP error or refused the request."""


class MalformedResponse(AgentRtError):
    """The provider answered 200 but the body did not parse as expected."""


class CompletionTimeout(ProviderError):
    """The provider did not answer within the configured timeout."""


class ScriptExhausted(ProviderError):
    """A scripted profile ran out of canned replies."""


class UnknownRouteKey(AgentRtError):
    """A router selected a key that has no configured sub-profile."""


class InvalidToolJson(AgentRtError):
    """A prompt-based tool_call block contained unparseable JSON."""


# --------------------------------------------------------------------------
# Message model


class TextPart(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    type: Literal["text"] = "text"
    text: str


class ImagePart(BaseModel):
    """An image given by URL (which may be a ``data:`` URI)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    type: Literal["image"] = "image"
    url: str


ContentPart = Annotated[Union[TextPart, ImagePart], Field(discriminator="type")]

Role = Literal["system", "user", "assistant", "tool"]


class ToolCall(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str
    name: str
    arguments: JsonValue


class Message(BaseModel):
    """One chat message.  Immutable; build a new one to change anything."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    role: Role
    content: tuple[ContentPart, ...] = ()
    tool_calls: tuple[ToolCall, ...] = ()
    tool_call_id: str | None = None

    @model_validator(mode="after")
    def _check_shape(self) -> "Message":
        if self.role == "tool" and not self.tool_call_id:
            raise ValueError("tool messages must carry tool_call_id")
        if self.tool_calls and self.role != "assistant":
            raise ValueError("only assistant messages may carry tool_calls")
        return self

    @classmethod
    def text_message(cls, role: Role, text: str, **kwargs: Any) -> "Message":
        return cls(role=role, content=(TextPart(text=text),), **kwargs)

    def text(self) -> str:
        return "".join(p.text for p in self.content if isinstance(p, TextPart))

    @property
    def has_image(self) -> bool:
        return any(isinstance(p, ImagePart) for p in self.content)


class Usage(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    prompt_tokens: int = 0
    completion_tokens: int = 0


class LLMResponse(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    message: Message
    usage: Usage = Usage()
    model: str = ""
    finish_reason: str = "stop"


# --------------------------------------------------------------------------
# Profiles


class UsagePricing(BaseModel):
    """USD per one million tokens, split by direction."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    prompt_usd_per_mtok: float = 0.0
    completion_usd_per_mtok: float = 0.0


class ScriptedToolCall(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    arguments: JsonValue
    id: str | None = None


class ScriptedReply(BaseModel):
    """One canned provider turn for offline runs.

    ``text`` is the assistant prose; ``tool_calls`` are emitted natively or,
    for non-native profiles, rendered into the reply text as a fenced block
    before parsing, so one script drives both modes identically.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    text: str = ""
    tool_calls: tuple[ScriptedToolCall, ...] = ()
    prompt_tokens: int = 3
    completion_tokens: int = 2
    finish_reason: str | None = None
    raise_error: str | None = None


class LLMProfile(BaseModel):
    """Everything needed to call one model, plus offline scripting hooks.

    ``api_key`` is a SecretStr: serializing a profile never reveals it.
    ``credential_alias`` lets a client omit the key entirely and have the
    agent server substitute one from its own configuration.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    type: Literal["llm"] = "llm"
    model: str
    base_url: str | None = None
    api_key: SecretStr | None = None
    credential_alias: str | None = None
    temperature: float | None = None
    max_output_tokens: int | None = None
    native_tool_calling: bool = True
    usage_pricing: UsagePricing | None = None
    scripted_responses: tuple[ScriptedReply, ...] | None = None

    _cursor: int = PrivateAttr(default=0)
    _cursor_lock: threading.Lock = PrivateAttr(default_factory=threading.Lock)
    _transcript: list[dict] = PrivateAttr(default_factory=list)

    @property
    def request_transcript(self) -> list[dict]:
        """Request bodies this profile has produced (scripted mode only)."""
        return self._transcript

    def _next_cursor(self) -> int:
        with self._cursor_lock:
            index = self._cursor
            self._cursor += 1
            return index


class RouterProfile(BaseModel):
    """Chooses one of several sub-profiles per request.

    The selection function is looked up by ``router`` in the selector
    registry, so router configurations stay serializable.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    type: Literal["router"] = "router"
    router: str = "multimodal"
    llms_for_routing: dict[str, LLMProfile]

    @model_validator(mode="after")
    def _check(self) -> "RouterProfile":
        if not self.llms_for_routing:
            raise ValueError("llms_for_routing must not be empty")
        if self.router not in _ROUTER_SELECTORS:
            raise ValueError(
                f"unknown router {self.router!r}; registered: "
                f"{sorted(_ROUTER_SELECTORS)}"
            )
        return self


LLMSpec = Annotated[Union[LLMProfile, RouterProfile], Field(discriminator="type")]


# Router selectors take the outgoing messages and return the key of the
# sub-profile to use.  Registered by name so RouterProfile stays data.
_ROUTER_SELECTORS: dict[str, Callable[[Sequence[Message]], str]] = {}


def register_router(name: str, select: Callable[[Sequence[Message]], str]) -> None:
    _ROUTER_SELECTORS[name] = select


def multimodal_select(messages: Sequence[Message]) -> str:
    """Route requests containing any image to "primary", else "secondary"."""
    if any(m.has_image for m in messages):
        return "primary"
    return "secondary"


register_router("multimodal", multimodal_select)


def select_profile(spec: RouterProfile, messages: Sequence[Message]) -> tuple[str, LLMProfile]:
    key = _ROUTER_SELECTORS[spec.router](list(messages))
    try:
        return key, spec.llms_for_routing[key]
    except KeyError:
        raise UnknownRouteKey(
            f"router {spec.router!r} selected {key!r} but only "
            f"{sorted(spec.llms_for_routing)} are configured"
        ) from None


# --------------------------------------------------------------------------
# Prompt-based tool calling

TOOL_BLOCK_RE = re.compile(r"```tool_call\s*\n(.*?)```", re.DOTALL)

_NONNATIVE_HEADER = """\
You can use the following tools. To call one, reply with exactly one fenced
code block tagged tool_call containing a JSON object with "name" and
"arguments", like:

```tool_call
{"name": "example", "arguments": {"arg": "value"}}
```

Any prose outside the block is kept as your commentary. Reply without a
tool_call block when you are done or need nothing executed.

Available tools:
"""


def render_tool_prompt(tools: Sequence[Mapping[str, Any]]) -> str:
    """Describe chat-format tool declarations for a prompt-only model."""
    lines = [_NONNATIVE_HEADER]
    for tool in tools:
        fn = tool.get("function", tool)
        lines.append(f"### {fn['name']}")
        description = fn.get("description", "")
        if description:
            lines.append(description)
        lines.append("Parameters (JSON Schema):")
        lines.append("```json")
        lines.append(json.dumps(fn.get("parameters", {}), indent=2, sort_keys=False))
        lines.append("```")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def render_tool_call_block(call: ToolCall | ScriptedToolCall) -> str:
    payload: dict[str, Any] = {"name": call.name, "arguments": call.arguments}
    if call.id:
        # Carry the id through the textual protocol so result messages
        # ("Result of tool call <id>: ...") still line up after a downgrade.
        payload["id"] = call.id
    return "```tool_call\n" + json.dumps(payload, ensure_ascii=False) + "\n```"


def parse_tool_reply(text: str) -> tuple[str, ToolCall | None]:
    """Split a prompt-mode reply into (commentary, first tool call or None).

    Raises InvalidToolJson when a block is present but does not contain a
    JSON object with a string ``name``; absence of a block is not an error.
    """
    match = TOOL_BLOCK_RE.search(text)
    if match is None:
        return text, None
    thought = (text[: match.start()] + text[match.end() :]).strip()
    body = match.group(1).strip()
    try:
        payload = json.loads(body)
    except json.JSONDecodeError as exc:
        raise InvalidToolJson(f"tool_call block is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("name"), str):
        raise InvalidToolJson('tool_call block must be {"name": ..., "arguments": ...}')
    arguments = payload.get("arguments")
    if arguments is None:
        arguments = {}
    call_id = payload.get("id")
    if not isinstance(call_id, str) or not call_id:
        call_id = f"call_{new_id()}"
    return thought, ToolCall(id=call_id, name=payload["name"], arguments=arguments)


# --------------------------------------------------------------------------
# Request serialization (chat-completions wire shape)


def _part_to_wire(part: TextPart | ImagePart) -> dict:
    if isinstance(part, TextPart):
        return {"type": "text", "text": part.text}
    return {"type": "image_url", "image_url": {"url": part.url}}


def _message_to_wire(message: Message) -> dict:
    out: dict[str, Any] = {"role": message.role}
    parts = message.content
    if all(isinstance(p, TextPart) for p in parts):
        out["content"] = "".join(p.text for p in parts)  # type: ignore[union-attr]
    else:
        out["content"] = [_part_to_wire(p) for p in parts]
    if message.tool_calls:
        out["tool_calls"] = [
            {
                "id": c.id,
                "type": "function",
                "function": {"name": c.name, "arguments": json.dumps(c.arguments)},
            }
            for c in message.tool_calls
        ]
    if message.role == "tool":
        out["tool_call_id"] = message.tool_call_id
    return out


def _downgrade_for_prompt_tools(
    messages: Sequence[Message], tools: Sequence[Mapping[str, Any]]
) -> list[Message]:
    """Rewrite a native-tool conversation for a prompt-only model.

    Tool declarations fold into the system message, past assistant calls are
    re-rendered as fenced blocks, and tool results become user messages.  The
    transformation is applied when building each request, so the stored
    events stay provider-agnostic.
    """
    out: list[Message] = []
    tool_prompt = render_tool_prompt(tools) if tools else ""
    saw_system = False
    for message in messages:
        if message.role == "system" and not saw_system:
            saw_system = True
            if tool_prompt:
                message = Message.text_message(
                    "system", message.text() + "\n\n" + tool_prompt
                )
            out.append(message)
        elif message.role == "assistant" and message.tool_calls:
            rendered = message.text()
            for call in message.tool_calls:
                if rendered:
                    rendered += "\n"
                rendered += render_tool_call_block(call)
            out.append(Message.text_message("assistant", rendered))
        elif message.role == "tool":
            out.append(
                Message.text_message(
                    "user",
                    f"Result of tool call {message.tool_call_id}:\n{message.text()}",
                )
            )
        else:
            out.append(message)
    if tool_prompt and not saw_system:
        out.insert(0, Message.text_message("system", tool_prompt))
    return out


def serialize_request(
    profile: LLMProfile,
    messages: Sequence[Message],
    tools: Sequence[Mapping[str, Any]] = (),
) -> dict:
    """Build the JSON request body the provider would receive."""
    if not profile.native_tool_calling:
        messages = _downgrade_for_prompt_tools(messages, tools)
        tools = ()
    body: dict[str, Any] = {
        "model": profile.model,
        "messages": [_message_to_wire(m) for m in messages],
    }
    if profile.temperature is not None:
        body["temperature"] = profile.temperature
    if profile.max_output_tokens is not None:
        body["max_tokens"] = profile.max_output_tokens
    if tools:
        body["tools"] = list(tools)
    return body


# --------------------------------------------------------------------------
# Completion


def _scripted_complete(
    profile: LLMProfile,
    body: dict,
    call_index: int | None,
) -> LLMResponse:
    profile._transcript.append(body)
    script = profile.scripted_responses or ()
    index = call_index if call_index is not None else profile._next_cursor()
    if index >= len(script):
        raise ScriptExhausted(
            f"scripted profile {profile.model!r} has {len(script)} replies, "
            f"reply {index} requested"
        )
    reply = script[index]
    if reply.raise_error is not None:
        raise ProviderError(reply.raise_error)

    if profile.native_tool_calling:
        calls = tuple(
            ToolCall(
                id=c.id or f"call_{new_id()}",
                name=c.name,
                arguments=c.arguments,
            )
            for c in reply.tool_calls
        )
        content = (TextPart(text=reply.text),) if reply.text else ()
        message = Message(role="assistant", content=content, tool_calls=calls)
        finish = reply.finish_reason or ("tool_calls" if calls else "stop")
    else:
        # Simulate what a prompt-only model would emit, then parse it back
        # through the same path a live provider's text would take.
        text = reply.text
        if reply.tool_calls:
            if text:
                text += "\n"
            text += render_tool_call_block(reply.tool_calls[0])
        thought, call = parse_tool_reply(text)
        calls = (call,) if call is not None else ()
        content = (TextPart(text=thought),) if thought else ()
        message = Message(role="assistant", content=content, tool_calls=calls)
        finish = reply.finish_reason or "stop"

    return LLMResponse(
        message=message,
        usage=Usage(
            prompt_tokens=reply.prompt_tokens,
            completion_tokens=reply.completion_tokens,
        ),
        model=profile.model,
        finish_reason=finish,
    )


def _parse_wire_message(payload: Mapping[str, Any], native: bool) -> Message:
    content = payload.get("content")
    parts: tuple[ContentPart, ...]
    if content is None:
        parts = ()
    elif isinstance(content, str):
        parts = (TextPart(text=content),) if content else ()
    else:
        raise MalformedResponse(f"unsupported assistant content shape: {type(content)}")

    raw_calls = payload.get("tool_calls") or []
    calls = []
    for raw in raw_calls:
        try:
            fn = raw["function"]
            arguments = fn.get("arguments", "{}")
            if isinstance(arguments, str):
                arguments = json.loads(arguments) if arguments else {}
            calls.append(
                ToolCall(
                    id=raw.get("id") or f"call_{new_id()}",
                    name=fn["name"],
                    arguments=arguments,
                )
            )
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise MalformedResponse(f"bad tool_call in response: {exc}") from exc

    message = Message(role="assistant", content=parts, tool_calls=tuple(calls))
    if not native and not calls:
        text = message.text()
        thought, call = parse_tool_reply(text)  # may raise InvalidToolJson
        if call is not None:
            message = Message(
                role="assistant",
                content=(TextPart(text=thought),) if thought else (),
                tool_calls=(call,),
            )
    return message


def _wire_complete(
    profile: LLMProfile,
    body: dict,
    transport: httpx.BaseTransport | None,
) -> LLMResponse:
    base_url = profile.base_url or "https://api.openai.com/v1"
    headers = {"Content-Type": "application/json"}
    if profile.api_key is not None:
        headers["Authorization"] = f"Bearer {profile.api_key.get_secret_value()}"
    try:
        with httpx.Client(
            timeout=DEFAULT_TIMEOUT_S, transport=transport, base_url=base_url
        ) as client:
            response = client.post("/chat/completions", json=body, headers=headers)
    except httpx.TimeoutException as exc:
        raise CompletionTimeout(f"provider timed out after {DEFAULT_TIMEOUT_S}s") from exc
    except httpx.HTTPError as exc:
        raise ProviderError(f"transport failure: {exc}") from exc

    if response.status_code >= 400:
        raise ProviderError(
            f"provider returned {response.status_code}: {response.text[:500]}"
        )
    try:
        payload = response.json()
        choice = payload["choices"][0]
        message = _parse_wire_message(choice["message"], profile.native_tool_calling)
        usage = payload.get("usage") or {}
        return LLMResponse(
            message=message,
            usage=Usage(
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
            ),
            model=str(payload.get("model", profile.model)),
            finish_reason=str(choice.get("finish_reason", "stop")),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"unexpected response shape: {exc}") from exc


def complete(
    spec: LLMProfile | RouterProfile,
    messages: Sequence[Message],
    tools: Sequence[Mapping[str, Any]] = (),
    *,
    call_index: int | None = None,
    transport: httpx.BaseTransport | None = None,
) -> LLMResponse:
    """Run one completion against a profile or router.

    ``call_index`` selects the scripted reply explicitly (used by the agent,
    which persists its own call counter so replay after resume is exact).
    When None, scripted profiles consume replies with a private cursor.
    ``transport`` overrides the HTTP transport, for tests.
    """
    if isinstance(spec, RouterProfile):
        _, profile = select_profile(spec, messages)
        return complete(
            profile, messages, tools, call_index=call_index, transport=transport
        )
    body = serialize_request(spec, messages, tools)
    if spec.scripted_responses is not None:
        return _scripted_complete(spec, body, call_index)
    return _wire_complete(spec, body, transport)


def route_complete(
    spec: RouterProfile,
    messages: Sequence[Message],
    tools: Sequence[Mapping[str, Any]] = (),
    *,
    call_index: int | None = None,
    transport: httpx.BaseTransport | None = None,
) -> tuple[str, LLMResponse]:
    """Like :func:`complete` for routers, but also reports the chosen key."""
    key, profile = select_profile(spec, messages)
    return key, complete(
        profile, messages, tools, call_index=call_index, transport=transport
    )


# --------------------------------------------------------------------------
# Usage accounting


def pricing_for(spec: LLMProfile | RouterProfile, model: str) -> UsagePricing | None:
    if isinstance(spec, LLMProfile):
        return spec.usage_pricing
    for profile in spec.llms_for_routing.values():
        if profile.model == model and profile.usage_pricing is not None:
            return profile.usage_pricing
    return None


def record_usage(
    stats: "ConversationStats",
    response: LLMResponse,
    spec: LLMProfile | RouterProfile,
) -> "ConversationStats":
    """Fold one response into the running totals (returns a new stats)."""
    pricing = pricing_for(spec, response.model)
    cost = 0.0
    if pricing is not None:
        cost = (
            response.usage.prompt_tokens * pricing.prompt_usd_per_mtok
            + response.usage.completion_tokens * pricing.completion_usd_per_mtok
        ) / 1_000_000
    return stats.model_copy(
        update={
            "prompt_tokens": stats.prompt_tokens + response.usage.prompt_tokens,
            "completion_tokens": stats.completion_tokens + response.usage.completion_tokens,
            "total_cost": stats.total_cost + cost,
            "llm_calls": stats.llm_calls + 1,
        }
    )


def iter_text(messages: Iterable[Message]) -> Iterable[str]:
    """All text fragments across messages (handy for assertions and scans)."""
    for message in messages:
        for part in message.content:
            if isinstance(part, TextPart):
                yield part.text
