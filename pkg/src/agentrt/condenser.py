"""View condensation: keep the log whole, shrink what the model reads.

When the LLM view outgrows ``max_view_events``, the condenser picks the span
between a kept head and a kept tail, asks a model to summarize it, and
appends a Condensation event.  The log itself is never rewritten; the view
builder (:func:`agentrt.events.apply_condensations`) does the folding.

Boundaries respect action/observation pairing: a pair is either fully kept
or fully forgotten, never split, because a dangling tool call confuses every
chat-completions provider.  System prompts always survive.
"""

from __future__ import annotations

from typing import Sequence

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import AgentRtError
from .events import (
    ActionEvent,
    AgentErrorEvent,
    BaseEvent,
    Condensation,
    CondensationSummaryEvent,
    MessageEvent,
    ObservationEvent,
    SystemPromptEvent,
    UserRejectObservation,
)
from .llm import LLMProfile, Message, RouterProfile, complete

DEFAULT_MAX_VIEW_EVENTS = 80
DEFAULT_KEEP_HEAD = 4
DEFAULT_KEEP_TAIL = 20

SUMMARIZER_SYSTEM_PROMPT = """\
You compress agent conversation history. Summarize the given events into a
dense brief a coding agent can act on later. Keep, in this order of
importance: user requirements and constraints, decisions made and why, file
paths and commands that matter, unresolved errors, and current progress.
Drop pleasantries and dead ends. Answer with the summary only.
"""


class SummarizerFailure(AgentRtError):
    """The summarizing model call failed; the caller proceeds uncondensed."""


class CondenserPolicy(BaseModel):
    """When and how much to condense.

    ``summarizer_llm`` defaults to the agent's own model.  Scripted runs
    should set it explicitly so summary calls cannot eat the agent's canned
    replies.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_view_events: int = Field(default=DEFAULT_MAX_VIEW_EVENTS, gt=0)
    keep_head: int = Field(default=DEFAULT_KEEP_HEAD, ge=0)
    keep_tail: int = Field(default=DEFAULT_KEEP_TAIL, ge=1)
    summarizer_llm: LLMProfile | RouterProfile | None = None

    @model_validator(mode="after")
    def _check_budget(self) -> "CondenserPolicy":
        if self.keep_head + self.keep_tail >= self.max_view_events:
            raise ValueError(
                "keep_head + keep_tail must be smaller than max_view_events"
            )
        return self


def should_condense(policy: CondenserPolicy, view: Sequence[BaseEvent]) -> bool:
    return len(view) > policy.max_view_events


def _pair_partner_index(view: Sequence[BaseEvent], index: int) -> int | None:
    """For a tool result at ``index``, the index of its action (or None)."""
    event = view[index]
    call_id = None
    if isinstance(event, (ObservationEvent, UserRejectObservation)):
        call_id = event.tool_call_id
    elif isinstance(event, AgentErrorEvent) and event.tool_call_id:
        call_id = event.tool_call_id
    if call_id is None:
        return None
    for j in range(index - 1, -1, -1):
        candidate = view[j]
        if isinstance(candidate, ActionEvent) and candidate.tool_call_id == call_id:
            return j
    return None


def select_forgotten(
    policy: CondenserPolicy, view: Sequence[BaseEvent]
) -> list[BaseEvent]:
    """The events a condensation of this view would drop.

    Starts from [keep_head, len - keep_tail) and widens both edges until no
    action/observation pair is split, then filters out system prompts.
    """
    start = policy.keep_head
    end = len(view) - policy.keep_tail
    if end <= start:
        return []

    # Head edge: a result at the start whose action sits in the kept head
    # pulls the action into the forgotten span.
    moved = True
    while moved:
        moved = False
        for index in range(start, end):
            partner = _pair_partner_index(view, index)
            if partner is not None and partner < start:
                start = partner
                moved = True
    # Tail edge: a kept result whose action is being forgotten gets
    # forgotten too.
    grew = True
    while grew:
        grew = False
        for index in range(end, len(view)):
            partner = _pair_partner_index(view, index)
            if partner is not None and start <= partner < end:
                end = index + 1
                grew = True

    return [
        event
        for event in view[start:end]
        if not isinstance(event, SystemPromptEvent)
    ]


def _event_digest(event: BaseEvent) -> str:
    if isinstance(event, MessageEvent):
        text = "".join(getattr(p, "text", "[image]") for p in event.content)
        return f"{event.role}: {text}"
    if isinstance(event, ActionEvent):
        return f"action {event.tool_name}: {event.arguments}"
    if isinstance(event, ObservationEvent):
        return f"result ({event.tool_name}): {event.llm_text}"
    if isinstance(event, UserRejectObservation):
        return f"user rejected {event.tool_call_id}: {event.note}"
    if isinstance(event, AgentErrorEvent):
        return f"error: {event.error}"
    if isinstance(event, CondensationSummaryEvent):
        return f"earlier summary: {event.summary}"
    return ""


def condense(
    policy: CondenserPolicy,
    view: Sequence[BaseEvent],
    *,
    fallback_llm: LLMProfile | RouterProfile | None = None,
):
    """Produce the Condensation event for an oversized view.

    Returns ``(condensation, response)`` so the caller can fold the
    summarizer's token usage into the conversation stats; both are None when
    the kept regions already cover everything.  Raises SummarizerFailure
    when the model call fails; callers proceed with the full view.
    """
    forgotten = select_forgotten(policy, view)
    if not forgotten:
        return None, None
    llm = policy.summarizer_llm or fallback_llm
    if llm is None:
        raise SummarizerFailure("no summarizer model configured")

    digest = "\n".join(filter(None, (_event_digest(e) for e in forgotten)))
    messages = [
        Message.text_message("system", SUMMARIZER_SYSTEM_PROMPT),
        Message.text_message("user", f"Events to summarize:\n{digest}"),
    ]
    try:
        response = complete(llm, messages)
    except AgentRtError as exc:
        raise SummarizerFailure(f"summarizer call failed: {exc}") from exc
    summary = response.message.text().strip()
    if not summary:
        raise SummarizerFailure("summarizer returned empty text")

    condensation = Condensation(
        source="system",
        forgotten_event_ids=tuple(e.id for e in forgotten),
        summary=summary,
        anchor_id=forgotten[0].id,
    )
    return condensation, response
