"""The event model: everything a conversation ever does, as immutable facts.

A conversation is an append-only log of events.  Seven variants convert into
chat messages for the model; four are bookkeeping the model never sees.  The
union is closed and discriminated by ``kind``, so serialization is a plain
JSON object per event and deserialization dispatches on one string.

Condensation never rewrites the log.  A ``Condensation`` event records which
earlier events to drop from the *view*; :func:`apply_condensations` folds all
of them over the log to produce what the model is actually shown.  Replaying
the same log always yields the same view.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from typing import Annotated, Iterable, Literal, Sequence, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    JsonValue,
    TypeAdapter,
    field_validator,
)

from .errors import AgentRtError
from .ids import is_valid_id, new_id
from .llm import ContentPart, Message, TextPart, ToolCall
from .security import RiskLevel


class UnknownKind(AgentRtError):
    """The ``kind`` discriminator names no event variant."""


class SchemaViolation(AgentRtError):
    """A payload failed validation against its variant's schema."""


class DanglingForgottenId(AgentRtError):
    """A Condensation references an event id that is not in the log."""


Source = Literal["user", "agent", "environment", "system"]


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


class BaseEvent(BaseModel):
    """Common shape of every event.

    ``id`` is time-ordered and unique; ``source`` records who caused the
    event: the human (user), the model (agent), tool execution or the
    scaffold reacting to it (environment), or the runtime itself (system).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str = Field(default_factory=new_id)
    timestamp: datetime = Field(default_factory=utcnow)
    source: Source

    @field_validator("id")
    @classmethod
    def _check_id(cls, value: str) -> str:
        if not is_valid_id(value):
            raise ValueError(f"malformed event id: {value!r}")
        return value

    @field_validator("timestamp")
    @classmethod
    def _force_utc(cls, value: datetime) -> datetime:
        if value.tzinfo is None:
            return value.replace(tzinfo=timezone.utc)
        return value.astimezone(timezone.utc)


class MessageEvent(BaseEvent):
    """Plain chat traffic in either direction."""

    kind: Literal["message"] = "message"
    role: Literal["user", "assistant"]
    content: tuple[ContentPart, ...]


class SystemPromptEvent(BaseEvent):
    """The system prompt, with the tool declarations shipped alongside it."""

    kind: Literal["system_prompt"] = "system_prompt"
    prompt: str
    tools: tuple[JsonValue, ...] = ()


class ActionEvent(BaseEvent):
    """The model asked for a tool run.  Arguments are stored validated,
    minus any ``security_risk`` self-assessment, which lands in its own
    field."""

    kind: Literal["action"] = "action"
    tool_name: str
    tool_call_id: str
    arguments: JsonValue
    thought: str = ""
    security_risk: RiskLevel = RiskLevel.UNKNOWN


class ObservationEvent(BaseEvent):
    """What a tool run produced: a structured payload plus the rendered
    text the model sees."""

    kind: Literal["observation"] = "observation"
    tool_call_id: str
    tool_name: str
    result: JsonValue = None
    is_error: bool = False
    llm_text: str


class UserRejectObservation(BaseEvent):
    """A human declined a pending action; stands in for its observation."""

    kind: Literal["user_reject"] = "user_reject"
    tool_call_id: str
    tool_name: str = ""
    note: str = ""


class AgentErrorEvent(BaseEvent):
    """A scaffold-level failure the model should see and react to."""

    kind: Literal["agent_error"] = "agent_error"
    error: str
    tool_call_id: str | None = None


class CondensationSummaryEvent(BaseEvent):
    """Stands in for a forgotten span when building the model's view."""

    kind: Literal["condensation_summary"] = "condensation_summary"
    summary: str


class Condensation(BaseEvent):
    """Instruction to drop ``forgotten_event_ids`` from the view, replacing
    them with ``summary`` at the position of ``anchor_id``."""

    kind: Literal["condensation"] = "condensation"
    forgotten_event_ids: tuple[str, ...]
    summary: str
    anchor_id: str


class CondensationRequest(BaseEvent):
    """Marks that the condenser decided to run (useful when debugging)."""

    kind: Literal["condensation_request"] = "condensation_request"


class ConversationStateUpdateEvent(BaseEvent):
    """A durable record of one metadata field changing."""

    kind: Literal["state_update"] = "state_update"
    field: str
    value: JsonValue = None


class PauseEvent(BaseEvent):
    """A human asked the run loop to stop between steps."""

    kind: Literal["pause"] = "pause"


Event = Annotated[
    Union[
        MessageEvent,
        SystemPromptEvent,
        ActionEvent,
        ObservationEvent,
        UserRejectObservation,
        AgentErrorEvent,
        CondensationSummaryEvent,
        Condensation,
        CondensationRequest,
        ConversationStateUpdateEvent,
        PauseEvent,
    ],
    Field(discriminator="kind"),
]

EVENT_KINDS: dict[str, type[BaseEvent]] = {
    "message": MessageEvent,
    "system_prompt": SystemPromptEvent,
    "action": ActionEvent,
    "observation": ObservationEvent,
    "user_reject": UserRejectObservation,
    "agent_error": AgentErrorEvent,
    "condensation_summary": CondensationSummaryEvent,
    "condensation": Condensation,
    "condensation_request": CondensationRequest,
    "state_update": ConversationStateUpdateEvent,
    "pause": PauseEvent,
}

#: Variants that convert to chat messages; the rest are internal bookkeeping.
LLM_CONVERTIBLE = (
    MessageEvent,
    SystemPromptEvent,
    ActionEvent,
    ObservationEvent,
    UserRejectObservation,
    AgentErrorEvent,
    CondensationSummaryEvent,
)

_ADAPTER: TypeAdapter = TypeAdapter(Event)


def serialize_event(event: BaseEvent) -> str:
    """One event as a self-contained JSON document."""
    return event.model_dump_json()


def event_to_dict(event: BaseEvent) -> dict:
    return json.loads(serialize_event(event))


def deserialize_event(text: str | bytes | dict) -> BaseEvent:
    """Parse an event document, dispatching on its ``kind``.

    Raises UnknownKind for an unrecognized discriminator and SchemaViolation
    for anything else wrong with the payload.
    """
    if isinstance(text, (str, bytes)):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"event document is not valid JSON: {exc}") from exc
    else:
        payload = text
    if not isinstance(payload, dict):
        raise SchemaViolation("event document must be a JSON object")
    kind = payload.get("kind")
    if kind not in EVENT_KINDS:
        raise UnknownKind(f"unknown event kind: {kind!r}")
    try:
        return _ADAPTER.validate_python(payload)
    except Exception as exc:
        raise SchemaViolation(f"invalid {kind} event: {exc}") from exc


# --------------------------------------------------------------------------
# Condensation


def apply_condensations(events: Sequence[BaseEvent]) -> list[BaseEvent]:
    """Fold every Condensation in ``events`` into the view the model sees.

    Each condensation, in log order, removes its forgotten events from the
    running view and splices in a CondensationSummaryEvent where the first
    forgotten event sat.  The synthesized summary inherits the Condensation's
    id so later condensations can forget it too.  Internal events never make
    it into the view.
    """
    view: list[BaseEvent] = []
    known_ids = {e.id for e in events}
    for event in events:
        if isinstance(event, Condensation):
            missing = [i for i in event.forgotten_event_ids if i not in known_ids]
            if missing:
                raise DanglingForgottenId(
                    f"condensation {event.id} forgets unknown event ids: {missing}"
                )
            forgotten = set(event.forgotten_event_ids)
            anchor = None
            for index, seen in enumerate(view):
                if seen.id in forgotten:
                    anchor = index
                    break
            survivors = [e for e in view if e.id not in forgotten]
            summary = CondensationSummaryEvent(
                id=event.id,
                timestamp=event.timestamp,
                source=event.source,
                summary=event.summary,
            )
            if anchor is None:
                # Nothing forgotten is present (already dropped earlier):
                # keep the summary anyway, at the end.
                survivors.append(summary)
            else:
                survivors.insert(anchor, summary)
            view = survivors
        elif isinstance(event, LLM_CONVERTIBLE):
            view.append(event)
    return view


# --------------------------------------------------------------------------
# Projection to chat messages

AGENT_ERROR_PREFIX = "[agent error] "
SUMMARY_PREFIX = "Summary of earlier events:\n"


def event_to_messages(event: BaseEvent) -> list[Message]:
    """Convert one LLM-convertible event to zero or more chat messages."""
    if isinstance(event, MessageEvent):
        return [Message(role=event.role, content=event.content)]
    if isinstance(event, SystemPromptEvent):
        return [Message.text_message("system", event.prompt)]
    if isinstance(event, ActionEvent):
        content = (TextPart(text=event.thought),) if event.thought else ()
        return [
            Message(
                role="assistant",
                content=content,
                tool_calls=(
                    ToolCall(
                        id=event.tool_call_id,
                        name=event.tool_name,
                        arguments=event.arguments,
                    ),
                ),
            )
        ]
    if isinstance(event, ObservationEvent):
        return [
            Message.text_message(
                "tool", event.llm_text, tool_call_id=event.tool_call_id
            )
        ]
    if isinstance(event, UserRejectObservation):
        text = "The user rejected this action."
        if event.note:
            text += f" Note: {event.note}"
        return [Message.text_message("tool", text, tool_call_id=event.tool_call_id)]
    if isinstance(event, AgentErrorEvent):
        text = AGENT_ERROR_PREFIX + event.error
        if event.tool_call_id:
            return [
                Message.text_message("tool", text, tool_call_id=event.tool_call_id)
            ]
        return [Message.text_message("user", text)]
    if isinstance(event, CondensationSummaryEvent):
        return [Message.text_message("user", SUMMARY_PREFIX + event.summary)]
    return []


def to_llm_messages(view: Iterable[BaseEvent]) -> list[Message]:
    """Project an event view onto the chat-message list sent to the model."""
    messages: list[Message] = []
    for event in view:
        messages.extend(event_to_messages(event))
    return messages
