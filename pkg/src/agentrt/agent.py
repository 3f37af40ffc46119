"""The agent: a pure step function plus its configuration.

An agent is configuration, not an object with memory.  Everything it knows
between steps lives in the event log, so :func:`step` can be called against
any ConversationState (fresh, resumed from disk, or rebuilt on a server) and
behaves identically.  One step is at most one model call and at most one
tool execution; extra tool calls in a reply are deferred to later steps so
every action lands in the log before the next one starts.
"""

from __future__ import annotations

import enum
import re
import textwrap
from importlib import resources
from pathlib import Path
from typing import Literal, Mapping, Sequence

from pydantic import BaseModel, ConfigDict, Field

from .condenser import CondenserPolicy, SummarizerFailure, condense, should_condense
from .errors import AgentRtError
from .events import (
    ActionEvent,
    AgentErrorEvent,
    BaseEvent,
    CondensationRequest,
    CondensationSummaryEvent,
    MessageEvent,
    ObservationEvent,
    SystemPromptEvent,
    UserRejectObservation,
    apply_condensations,
    event_to_messages,
)
from .llm import (
    InvalidToolJson,
    LLMProfile,
    Message,
    RouterProfile,
    TextPart,
    ToolCall,
    complete,
    record_usage,
)
from .schema import SchemaViolation
from .secrets import SecretRegistry
from .security import (
    RISK_PARAM,
    RISK_PROPERTY,
    AnalyzerKind,
    analyze_action,
    requires_confirmation,
)
from .state import AgentStatus, ConversationState, append_event, update_metadata
from .tools.base import Action, Observation, ToolDefinition, ToolSpec, to_chat_tool

STUCK_REPEAT_THRESHOLD = 3
TITLE_MAX_LENGTH = 60
DEFAULT_TITLE = "New conversation"


def _asset(name: str) -> str:
    return (resources.files("agentrt") / "assets" / name).read_text(encoding="utf-8")


BASE_SYSTEM_PROMPT = _asset("system_prompt.md")
TITLE_PROMPT = _asset("title_prompt.md")


class Skill(BaseModel):
    """A reusable prompt fragment.

    With ``trigger=None`` the skill always rides along in the system prompt;
    with trigger keywords it is injected only for requests whose user
    messages mention one of them.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    content: str
    trigger: tuple[str, ...] | None = None


class AgentContext(BaseModel):
    """Prompt customization around the base system prompt."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    system_prompt_prefix: str | None = None
    system_prompt_suffix: str | None = None
    user_message_prefix: str | None = None
    skills: tuple[Skill, ...] = ()


class AgentConfig(BaseModel):
    """Everything that defines an agent's behavior.  Plain data: it
    serializes to JSON and back, which is how remote servers reconstruct
    agents."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    llm: LLMProfile | RouterProfile = Field(discriminator="type")
    tool_specs: tuple[ToolSpec, ...] = ()
    context: AgentContext = AgentContext()
    security_analyzer: AnalyzerKind | None = None
    condenser: CondenserPolicy | None = None
    max_iterations: int = Field(default=100, gt=0)
    await_user_on_message: bool = False


class StepOutcome(str, enum.Enum):
    CONTINUED = "continued"
    AWAITING_CONFIRMATION = "awaiting_confirmation"
    FINISHED = "finished"
    ERRORED = "errored"


# --------------------------------------------------------------------------
# Skills


def always_active_skills(skills: Sequence[Skill]) -> list[Skill]:
    return [s for s in skills if s.trigger is None]


def triggered_skills(skills: Sequence[Skill], user_texts: Sequence[str]) -> list[Skill]:
    """Trigger-gated skills whose keywords appear in any user text."""
    haystack = "\n".join(user_texts).lower()
    matched = []
    for skill in skills:
        if skill.trigger is None:
            continue
        if any(keyword.lower() in haystack for keyword in skill.trigger):
            matched.append(skill)
    return matched


_FRONT_MATTER_RE = re.compile(r"\A---\s*\n(.*?)\n---\s*\n", re.DOTALL)

#: Conventional per-workspace skill location, relative to the workspace root.
SKILLS_SUBDIR = Path(".agentrt") / "skills"


def discover_skills(root: Path | str) -> list[Skill]:
    """Load skills from ``<root>/.agentrt/skills/*.md`` if that exists.

    ``root`` is typically the workspace directory; a missing skills
    directory simply means no skills.
    """
    directory = Path(root) / SKILLS_SUBDIR
    if not directory.is_dir():
        return []
    return load_skills(directory)


def load_skills(directory: Path | str) -> list[Skill]:
    """Read ``*.md`` skill files, each with optional front matter.

    Front matter is ``key: value`` lines between ``---`` fences; recognized
    keys are ``name`` and ``trigger`` (comma-separated keywords).  A file
    without front matter becomes an always-active skill named after itself.
    """
    skills = []
    for path in sorted(Path(directory).glob("*.md")):
        text = path.read_text(encoding="utf-8")
        name = path.stem
        trigger: tuple[str, ...] | None = None
        match = _FRONT_MATTER_RE.match(text)
        if match:
            text = text[match.end() :]
            for line in match.group(1).splitlines():
                if ":" not in line:
                    continue
                key, _, value = line.partition(":")
                key = key.strip().lower()
                value = value.strip()
                if key == "name" and value:
                    name = value
                elif key == "trigger" and value:
                    trigger = tuple(
                        t.strip() for t in value.split(",") if t.strip()
                    )
        skills.append(Skill(name=name, content=text.strip(), trigger=trigger))
    return skills


def build_system_prompt(config: AgentConfig) -> str:
    context = config.context
    sections = []
    if context.system_prompt_prefix:
        sections.append(context.system_prompt_prefix)
    sections.append(BASE_SYSTEM_PROMPT.strip())
    for skill in always_active_skills(context.skills):
        sections.append(f"## {skill.name}\n\n{skill.content}")
    if context.system_prompt_suffix:
        sections.append(context.system_prompt_suffix)
    return "\n\n".join(sections)


def chat_tools_for(config: AgentConfig, tools: Mapping[str, ToolDefinition]) -> list[dict]:
    """Tool declarations for a request, with the risk parameter added when
    the model itself is the security analyzer."""
    extra = {RISK_PARAM: dict(RISK_PROPERTY)} if config.security_analyzer == "llm" else None
    return [to_chat_tool(tool, extra_properties=extra) for tool in tools.values()]


# --------------------------------------------------------------------------
# Stuck detection


def _unit_fingerprint(events: Sequence[BaseEvent]) -> list[tuple]:
    """Reduce a log to comparable interaction units, in order.

    A unit is an (action, result) pair or a bare agent error.  User and
    assistant messages produce breaker units, so human intervention resets
    any repetition streak.  Internal events are invisible here.
    """
    units: list[tuple] = []
    actions: dict[str, ActionEvent] = {}
    for event in events:
        if isinstance(event, ActionEvent):
            actions[event.tool_call_id] = event
        elif isinstance(event, ObservationEvent):
            action = actions.get(event.tool_call_id)
            if action is not None:
                units.append(
                    (
                        "pair",
                        action.tool_name,
                        repr(action.arguments),
                        event.llm_text,
                        event.is_error,
                    )
                )
        elif isinstance(event, AgentErrorEvent):
            units.append(("error", event.error))
        elif isinstance(event, (MessageEvent, UserRejectObservation)):
            units.append(("break", event.id))
    return units


def detect_stuck(events: Sequence[BaseEvent], threshold: int = STUCK_REPEAT_THRESHOLD) -> bool:
    """True when the tail of the log is the same exchange over and over:
    ``threshold`` identical action/observation pairs or identical errors,
    uninterrupted by any message."""
    units = _unit_fingerprint(events)
    if len(units) < threshold:
        return False
    tail = units[-threshold:]
    first = tail[0]
    if first[0] == "break":
        return False
    return all(unit == first for unit in tail)


# --------------------------------------------------------------------------
# Titles


def fallback_title(text: str, max_length: int = TITLE_MAX_LENGTH) -> str:
    squeezed = " ".join(text.split())
    if not squeezed:
        return DEFAULT_TITLE
    return textwrap.shorten(squeezed, width=max_length, placeholder="...")


def generate_title(
    llm: LLMProfile | RouterProfile | None,
    first_message: str,
    max_length: int = TITLE_MAX_LENGTH,
) -> str:
    """A short human-facing title for a conversation.

    Uses the given model when available, falling back to a truncated first
    message on any failure; never raises and never returns empty.
    """
    if not first_message.strip():
        return DEFAULT_TITLE
    if llm is None:
        return fallback_title(first_message, max_length)
    try:
        response = complete(
            llm,
            [
                Message.text_message("system", TITLE_PROMPT),
                Message.text_message("user", first_message),
            ],
        )
        title = response.message.text().strip().splitlines()[0].strip().strip("\"'")
        if not title:
            return fallback_title(first_message, max_length)
        if len(title) > max_length:
            title = title[: max_length - 3].rstrip() + "..."
        return title
    except (AgentRtError, IndexError):
        return fallback_title(first_message, max_length)


# --------------------------------------------------------------------------
# The step function


def build_request_messages(
    config: AgentConfig, view: Sequence[BaseEvent]
) -> list[Message]:
    """Chat messages for one request, with context transforms applied.

    The transforms (user message prefix, triggered skills) happen here, at
    request-build time, not in the stored events, so replaying a log under a
    different context produces that context's requests.
    """
    prefix = config.context.user_message_prefix
    messages: list[Message] = []
    user_texts: list[str] = []
    for event in view:
        converted = event_to_messages(event)
        if isinstance(event, MessageEvent) and event.role == "user":
            user_texts.append("".join(p.text for p in event.content if isinstance(p, TextPart)))
            if prefix:
                converted = [
                    Message(
                        role="user",
                        content=(TextPart(text=prefix),) + m.content,
                    )
                    for m in converted
                ]
        messages.extend(converted)

    skills = triggered_skills(config.context.skills, user_texts)
    if skills:
        body = "\n\n".join(f"## {s.name}\n\n{s.content}" for s in skills)
        insert_at = 1 if messages and messages[0].role == "system" else 0
        messages.insert(
            insert_at,
            Message.text_message("system", f"Relevant skills for this task:\n\n{body}"),
        )
    return messages


def _mask_observation(registry: SecretRegistry | None, obs: Observation) -> Observation:
    if registry is None:
        return obs
    return Observation(
        tool_name=obs.tool_name,
        llm_text=registry.mask(obs.llm_text),
        result=registry.mask_json(obs.result),
        is_error=obs.is_error,
    )


def _append_error(
    state: ConversationState,
    error: str,
    tool_call_id: str | None,
    registry: SecretRegistry | None,
) -> None:
    if registry is not None:
        error = registry.mask(error)
    append_event(
        state,
        AgentErrorEvent(source="environment", error=error, tool_call_id=tool_call_id),
    )


def _check_stuck_locked(state: ConversationState) -> bool:
    if detect_stuck(state.events.view()):
        update_metadata(state, "agent_status", AgentStatus.STUCK)
        return True
    return False


def execute_action_event(
    state: ConversationState,
    tools: Mapping[str, ToolDefinition],
    action_event: ActionEvent,
    *,
    secret_registry: SecretRegistry | None = None,
) -> StepOutcome:
    """Run an already-appended action and record what happened.

    Shared by the normal step path, confirmation approval, and re-execution
    of a dangling action after resume.
    """
    tool = tools[action_event.tool_name]
    arguments = action_event.arguments if isinstance(action_event.arguments, dict) else {}
    action = Action(tool_name=action_event.tool_name, arguments=arguments)
    try:
        observation = tool.executor(action)
    except Exception as exc:
        with state.locked():
            _append_error(
                state,
                f"{type(exc).__name__}: {exc}",
                action_event.tool_call_id,
                secret_registry,
            )
            if _check_stuck_locked(state):
                return StepOutcome.ERRORED
        return StepOutcome.CONTINUED

    observation = _mask_observation(secret_registry, observation)
    with state.locked():
        append_event(
            state,
            ObservationEvent(
                source="environment",
                tool_call_id=action_event.tool_call_id,
                tool_name=action_event.tool_name,
                result=observation.result,
                is_error=observation.is_error,
                llm_text=observation.llm_text,
            ),
        )
        if tool.terminal and not observation.is_error:
            update_metadata(state, "agent_status", AgentStatus.FINISHED)
            return StepOutcome.FINISHED
        if _check_stuck_locked(state):
            return StepOutcome.ERRORED
    return StepOutcome.CONTINUED


def _process_tool_call(
    config: AgentConfig,
    state: ConversationState,
    tools: Mapping[str, ToolDefinition],
    call: ToolCall,
    thought: str,
    *,
    secret_registry: SecretRegistry | None = None,
) -> StepOutcome:
    if call.name not in tools:
        with state.locked():
            _append_error(
                state,
                f"unknown tool {call.name!r}; available tools: {sorted(tools)}",
                call.id,
                secret_registry,
            )
            if _check_stuck_locked(state):
                return StepOutcome.ERRORED
        return StepOutcome.CONTINUED
    tool = tools[call.name]

    raw = call.arguments
    if not isinstance(raw, dict):
        with state.locked():
            _append_error(
                state, "tool arguments must be a JSON object", call.id, secret_registry
            )
        return StepOutcome.CONTINUED

    risk = analyze_action(config.security_analyzer, call.name, raw)
    exec_args = {k: v for k, v in raw.items() if k != RISK_PARAM}
    try:
        tool.validate_action(exec_args)
    except SchemaViolation as exc:
        with state.locked():
            _append_error(
                state,
                f"invalid arguments for {call.name}: {exc}",
                call.id,
                secret_registry,
            )
            if _check_stuck_locked(state):
                return StepOutcome.ERRORED
        return StepOutcome.CONTINUED

    action_event = ActionEvent(
        source="agent",
        tool_name=call.name,
        tool_call_id=call.id,
        arguments=exec_args,
        thought=thought,
        security_risk=risk,
    )
    with state.locked():
        append_event(state, action_event)
        if requires_confirmation(state.confirmation_policy, risk):
            update_metadata(
                state, "agent_status", AgentStatus.WAITING_FOR_CONFIRMATION
            )
            return StepOutcome.AWAITING_CONFIRMATION
    return execute_action_event(
        state, tools, action_event, secret_registry=secret_registry
    )


def _maybe_condense(config: AgentConfig, state: ConversationState) -> list[BaseEvent]:
    """Return the LLM view, condensing first when it has outgrown policy."""
    with state.locked():
        log = state.events.view()
    view = apply_condensations(log)
    policy = config.condenser
    if policy is None or not should_condense(policy, view):
        return view
    with state.locked():
        append_event(state, CondensationRequest(source="system"))
    try:
        condensation, response = condense(policy, view, fallback_llm=config.llm)
    except SummarizerFailure:
        # Better a bloated request than a dead conversation.
        return view
    if condensation is None:
        return view
    summarizer = policy.summarizer_llm or config.llm
    with state.locked():
        append_event(state, condensation)
        update_metadata(
            state, "stats", record_usage(state.stats, response, summarizer)
        )
        log = state.events.view()
    return apply_condensations(log)


def step(
    config: AgentConfig,
    state: ConversationState,
    tools: Mapping[str, ToolDefinition],
    *,
    secret_registry: SecretRegistry | None = None,
    transport=None,
) -> StepOutcome:
    """Advance the conversation by one unit of work.

    In order of precedence: re-execute a dangling action left by an
    interrupted run, execute one deferred tool call from a multi-call reply,
    or make one model call and act on it.  The state lock is held only
    around mutations, never across the model call or tool execution.
    """
    # Dangling action from an interrupted run: finish it before anything new.
    with state.locked():
        pending_id = state.pending_action_id
        state.pending_action_id = None
        pending_event = None
        if pending_id is not None:
            for event in state.events:
                if isinstance(event, ActionEvent) and event.id == pending_id:
                    pending_event = event
                    break
    if pending_event is not None and pending_event.tool_name in tools:
        return execute_action_event(
            state, tools, pending_event, secret_registry=secret_registry
        )

    # A previous reply asked for several tools; run the next one.
    with state.locked():
        deferred = state.deferred_calls.pop(0) if state.deferred_calls else None
    if deferred is not None:
        return _process_tool_call(
            config, state, tools, deferred, "", secret_registry=secret_registry
        )

    view = _maybe_condense(config, state)
    messages = build_request_messages(config, view)
    chat_tools = chat_tools_for(config, tools)

    with state.locked():
        call_index = state.agent_calls

    try:
        response = complete(
            config.llm,
            messages,
            chat_tools,
            call_index=call_index,
            transport=transport,
        )
    except InvalidToolJson as exc:
        # The model tried to call a tool but mangled the JSON; surface the
        # problem and let it try again.
        with state.locked():
            update_metadata(state, "agent_calls", call_index + 1)
            _append_error(state, str(exc), None, secret_registry)
            if _check_stuck_locked(state):
                return StepOutcome.ERRORED
        return StepOutcome.CONTINUED
    except AgentRtError as exc:
        with state.locked():
            _append_error(state, f"model call failed: {exc}", None, secret_registry)
            update_metadata(state, "agent_status", AgentStatus.ERROR)
        return StepOutcome.ERRORED

    with state.locked():
        update_metadata(state, "agent_calls", call_index + 1)
        update_metadata(
            state, "stats", record_usage(state.stats, response, config.llm)
        )

    message = response.message
    if not message.tool_calls:
        with state.locked():
            append_event(
                state,
                MessageEvent(source="agent", role="assistant", content=message.content),
            )
            done = AgentStatus.IDLE if config.await_user_on_message else AgentStatus.FINISHED
            update_metadata(state, "agent_status", done)
        return StepOutcome.FINISHED

    first, *rest = message.tool_calls
    if rest:
        with state.locked():
            state.deferred_calls.extend(rest)
    return _process_tool_call(
        config, state, tools, first, message.text(), secret_registry=secret_registry
    )
