"""Conversations: the run loop around the step function.

:class:`LocalConversation` owns a ConversationState, resolved tools, and a
workspace, and drives :func:`agentrt.agent.step` until something stops it.
:class:`RemoteConversation` is the same API against an agent server, with a
local mirror of the event stream.  The :class:`Conversation` factory picks
one based on the workspace you hand it.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .agent import (
    AgentConfig,
    StepOutcome,
    build_system_prompt,
    chat_tools_for,
    execute_action_event,
    fallback_title,
    generate_title,
    step,
)
from .errors import AgentRtError
from .events import (
    BaseEvent,
    ConversationStateUpdateEvent,
    MessageEvent,
    PauseEvent,
    SystemPromptEvent,
    UserRejectObservation,
    apply_condensations,
    deserialize_event,
)
from .llm import ContentPart, TextPart
from .llm import LLMProfile, RouterProfile
from .secrets import SecretRegistry, SecretSource
from .security import ConfirmationPolicy, NoPendingAction
from .state import (
    AgentStatus,
    ConversationState,
    append_event,
    find_pending_action,
    load_state,
    persist_snapshot,
    update_metadata,
)
from .tools.base import ToolContext, ToolDefinition, resolve_tool
from .workspace import (
    DEFAULT_WORKING_DIR,
    LocalWorkspace,
    RemoteWorkspace,
    ServerClient,
)


class AlreadyRunning(AgentRtError):
    """run() was called while another run loop is active."""

    state_consistent = True


def _as_content(message: str | Sequence[ContentPart]) -> tuple[ContentPart, ...]:
    if isinstance(message, str):
        return (TextPart(text=message),)
    return tuple(message)


class LocalConversation:
    """A conversation driven in this process.

    Everything durable lives in the ConversationState; this class adds the
    run loop, tool resolution, secrets, and lifecycle operations around it.
    """

    def __init__(
        self,
        agent: AgentConfig,
        workspace: LocalWorkspace | RemoteWorkspace | str | Path | None = None,
        *,
        working_dir: str | Path | None = None,
        persistence_dir: str | Path | None = None,
        conversation_id: str | None = None,
        confirmation_policy: ConfirmationPolicy | None = None,
        secrets: Mapping[str, str | SecretSource] | None = None,
        secret_registry: SecretRegistry | None = None,
        callbacks: Iterable[Callable[[BaseEvent], None]] = (),
        title_llm: LLMProfile | RouterProfile | None = None,
    ) -> None:
        self.agent = agent
        self.title_llm = title_llm

        if isinstance(workspace, (str, Path)):
            workspace = LocalWorkspace(workspace)
        if workspace is None:
            workspace = LocalWorkspace(working_dir or DEFAULT_WORKING_DIR)
        self.workspace = workspace
        if working_dir is not None:
            self.working_dir = Path(working_dir)
        elif isinstance(workspace, LocalWorkspace):
            self.working_dir = workspace.working_dir
        else:
            self.working_dir = Path(DEFAULT_WORKING_DIR)

        persistence = Path(persistence_dir) if persistence_dir else None
        if persistence is not None and (persistence / "base_state.json").exists():
            self.state = load_state(persistence)
        else:
            self.state = ConversationState(
                conversation_id,
                persistence_dir=persistence,
                confirmation_policy=confirmation_policy,
            )
        if confirmation_policy is not None and persistence is not None:
            # An explicit policy wins over whatever the resumed state had.
            self.state.confirmation_policy = confirmation_policy

        self.secret_registry = secret_registry or SecretRegistry(secrets)
        if secret_registry is not None and secrets:
            self.secret_registry.update(secrets)

        context = ToolContext(
            working_dir=self.working_dir,
            secret_registry=self.secret_registry,
            workspace=workspace if isinstance(workspace, RemoteWorkspace) else None,
            llm=agent.llm,
            persistence_dir=self.state.persistence_dir,
            tool_specs=agent.tool_specs,
            extras={"agent_config": agent},
        )
        self.tools: dict[str, ToolDefinition] = {}
        for spec in agent.tool_specs:
            tool = resolve_tool(spec, context)
            self.tools[tool.name] = tool

        for callback in callbacks:
            self.state.add_callback(callback)

    # -- introspection -------------------------------------------------------

    @property
    def id(self) -> str:
        return self.state.conversation_id

    @property
    def status(self) -> AgentStatus:
        return self.state.agent_status

    @property
    def events(self) -> tuple[BaseEvent, ...]:
        return self.state.events.view()

    @property
    def title(self) -> str | None:
        return self.state.title

    def llm_view(self) -> list[BaseEvent]:
        """The events the model would currently see, condensations applied."""
        return apply_condensations(self.events)

    def on_event(self, callback: Callable[[BaseEvent], None]) -> Callable[[], None]:
        """Observe every appended event; returns a detach function."""
        return self.state.add_callback(callback)

    # -- input ----------------------------------------------------------------

    def send_message(self, message: str | Sequence[ContentPart]) -> None:
        """Add a user message.  During a run it is queued and lands at the
        next loop iteration; on a finished conversation it reopens it."""
        event = MessageEvent(source="user", role="user", content=_as_content(message))
        with self.state.locked():
            if self.state.run_active:
                self.state.queued_messages.append(event)
                return
            append_event(self.state, event)
            if self.state.agent_status == AgentStatus.FINISHED:
                update_metadata(self.state, "agent_status", AgentStatus.IDLE)
            persist_snapshot(self.state)
        self._maybe_title(event)

    def update_secrets(self, secrets: Mapping[str, str | SecretSource]) -> None:
        with self.state.locked():
            self.secret_registry.update(secrets)

    def set_confirmation_policy(self, policy: ConfirmationPolicy) -> None:
        with self.state.locked():
            update_metadata(self.state, "confirmation_policy", policy)

    # -- the run loop ----------------------------------------------------------

    def run(self, max_steps: int | None = None) -> AgentStatus:
        """Step until the agent finishes, errs, gets stuck, pauses, needs
        confirmation, or exhausts its model-call budget.

        Only one run loop may be active at a time; a second concurrent call
        raises AlreadyRunning instead of interleaving steps.
        """
        with self.state.locked():
            if self.state.run_active:
                raise AlreadyRunning("this conversation is already running")
            self.state.run_active = True

        budget = max_steps if max_steps is not None else self.agent.max_iterations
        try:
            with self.state.locked():
                calls_at_start = self.state.agent_calls
            while True:
                with self.state.locked():
                    for queued in self.state.queued_messages:
                        append_event(self.state, queued)
                    drained = list(self.state.queued_messages)
                    self.state.queued_messages.clear()

                    if self.state.pause_requested:
                        self.state.pause_requested = False
                        append_event(self.state, PauseEvent(source="user"))
                        update_metadata(
                            self.state, "agent_status", AgentStatus.PAUSED
                        )
                        persist_snapshot(self.state)
                        break

                    status = self.state.agent_status
                    if status in (
                        AgentStatus.FINISHED,
                        AgentStatus.STUCK,
                        AgentStatus.ERROR,
                        AgentStatus.WAITING_FOR_CONFIRMATION,
                    ):
                        break
                    if self.state.agent_calls - calls_at_start >= budget:
                        update_metadata(self.state, "agent_status", AgentStatus.IDLE)
                        break
                    self._ensure_system_prompt_locked()
                    if status != AgentStatus.RUNNING:
                        update_metadata(
                            self.state, "agent_status", AgentStatus.RUNNING
                        )
                for event in drained:
                    self._maybe_title(event)

                outcome = step(
                    self.agent,
                    self.state,
                    self.tools,
                    secret_registry=self.secret_registry,
                )
                if outcome in (
                    StepOutcome.FINISHED,
                    StepOutcome.AWAITING_CONFIRMATION,
                    StepOutcome.ERRORED,
                ):
                    break
        finally:
            with self.state.locked():
                self.state.run_active = False
                persist_snapshot(self.state)
        return self.state.agent_status

    def pause(self) -> None:
        """Ask the run loop to stop before its next step.  Takes effect even
        if called before run(): that run pauses immediately."""
        with self.state.locked():
            self.state.pause_requested = True

    def confirm(self, decision: str, note: str = "") -> AgentStatus:
        """Resolve a pending action: ``"approve"`` executes it now,
        ``"reject"`` records a UserRejectObservation the model will see."""
        if decision not in ("approve", "reject"):
            raise ValueError("decision must be 'approve' or 'reject'")
        with self.state.locked():
            if self.state.agent_status != AgentStatus.WAITING_FOR_CONFIRMATION:
                raise NoPendingAction("no action is waiting for confirmation")
            pending = find_pending_action(self.state.events.view())
            if pending is None:
                update_metadata(self.state, "agent_status", AgentStatus.IDLE)
                raise NoPendingAction("no unresolved action found in the log")
            if decision == "reject":
                append_event(
                    self.state,
                    UserRejectObservation(
                        source="user",
                        tool_call_id=pending.tool_call_id,
                        tool_name=pending.tool_name,
                        note=note,
                    ),
                )
                update_metadata(self.state, "agent_status", AgentStatus.RUNNING)
                persist_snapshot(self.state)
                return self.state.agent_status
            update_metadata(self.state, "agent_status", AgentStatus.RUNNING)

        execute_action_event(
            self.state, self.tools, pending, secret_registry=self.secret_registry
        )
        with self.state.locked():
            persist_snapshot(self.state)
        return self.state.agent_status

    # -- internals --------------------------------------------------------------

    def _ensure_system_prompt_locked(self) -> None:
        if any(isinstance(e, SystemPromptEvent) for e in self.state.events):
            return
        append_event(
            self.state,
            SystemPromptEvent(
                source="system",
                prompt=build_system_prompt(self.agent),
                tools=tuple(chat_tools_for(self.agent, self.tools)),
            ),
        )

    def _maybe_title(self, event: MessageEvent) -> None:
        if self.state.title is not None:
            return
        text = "".join(p.text for p in event.content if isinstance(p, TextPart))
        if not text.strip():
            return
        if self.title_llm is None:
            title = fallback_title(text)
            with self.state.locked():
                if self.state.title is None:
                    update_metadata(self.state, "title", title)
            return

        def work() -> None:
            title = generate_title(self.title_llm, text)
            try:
                with self.state.locked():
                    if self.state.title is None:
                        update_metadata(self.state, "title", title)
            except AgentRtError:
                pass

        threading.Thread(target=work, name="title-generation", daemon=True).start()


class RemoteConversation:
    """The same conversation API, fulfilled by an agent server.

    Events stream over the server's WebSocket endpoint into a local mirror;
    ``run()`` blocks until the remote run settles, reconnecting with a
    ``since`` cursor if the stream drops mid-run.
    """

    def __init__(
        self,
        agent: AgentConfig,
        workspace: RemoteWorkspace,
        *,
        confirmation_policy: ConfirmationPolicy | None = None,
        secrets: Mapping[str, str] | None = None,
        callbacks: Iterable[Callable[[BaseEvent], None]] = (),
    ) -> None:
        self.agent = agent
        self.client: ServerClient = workspace.client
        payload: dict[str, Any] = {"agent": agent.model_dump(mode="json")}
        if confirmation_policy is not None:
            payload["confirmation_policy"] = confirmation_policy.model_dump(mode="json")
        if secrets:
            payload["secrets"] = dict(secrets)
        if workspace.working_dir:
            payload["working_dir"] = workspace.working_dir
        response = self.client.request("POST", "/conversations", json=payload)
        if response.status_code >= 400:
            raise AgentRtError(
                f"conversation creation failed ({response.status_code}): {response.text}"
            )
        body = response.json()
        self.id: str = body["id"]
        self.workspace = workspace.scoped(body["workspace_dir"])
        self._events: list[BaseEvent] = []
        self._callbacks = list(callbacks)
        self._status = AgentStatus.IDLE

    # -- mirror upkeep -----------------------------------------------------------

    def _ingest(self, frame: Mapping[str, Any]) -> BaseEvent | None:
        index = frame["index"]
        if index < len(self._events):
            return None  # replayed duplicate after a reconnect
        if index != len(self._events):
            raise AgentRtError(
                f"event stream gap: expected index {len(self._events)}, got {index}"
            )
        event = deserialize_event(frame["event"])
        self._events.append(event)
        if (
            isinstance(event, ConversationStateUpdateEvent)
            and event.field == "agent_status"
        ):
            self._status = AgentStatus(event.value)
        for callback in self._callbacks:
            try:
                callback(event)
            except Exception:
                pass
        return event

    def sync(self) -> None:
        """Pull any events the mirror is missing, without streaming."""
        response = self.client.request(
            "GET",
            f"/conversations/{self.id}/events",
            params={"since": len(self._events)},
        )
        if response.status_code >= 400:
            raise AgentRtError(f"event fetch failed: {response.status_code}")
        for frame in response.json()["events"]:
            self._ingest(frame)
        record = self.client.request("GET", f"/conversations/{self.id}").json()
        self._status = AgentStatus(record["status"])

    # -- conversation API ----------------------------------------------------------

    @property
    def status(self) -> AgentStatus:
        return self._status

    @property
    def events(self) -> tuple[BaseEvent, ...]:
        return tuple(self._events)

    @property
    def title(self) -> str | None:
        record = self.client.request("GET", f"/conversations/{self.id}").json()
        return record.get("title")

    def llm_view(self) -> list[BaseEvent]:
        return apply_condensations(self._events)

    def on_event(self, callback: Callable[[BaseEvent], None]) -> Callable[[], None]:
        self._callbacks.append(callback)
        return lambda: self._callbacks.remove(callback)

    def send_message(self, message: str | Sequence[ContentPart]) -> None:
        content = [part.model_dump(mode="json") for part in _as_content(message)]
        response = self.client.request(
            "POST",
            f"/conversations/{self.id}/messages",
            json={"content": content},
        )
        if response.status_code >= 400:
            raise AgentRtError(f"send_message failed: {response.status_code}")

    def update_secrets(self, secrets: Mapping[str, str]) -> None:
        response = self.client.request(
            "PATCH", f"/conversations/{self.id}/secrets", json=dict(secrets)
        )
        if response.status_code >= 400:
            raise AgentRtError(f"secret update failed: {response.status_code}")

    def set_confirmation_policy(self, policy: ConfirmationPolicy) -> None:
        response = self.client.request(
            "PATCH",
            f"/conversations/{self.id}/confirmation_policy",
            json=policy.model_dump(mode="json"),
        )
        if response.status_code >= 400:
            raise AgentRtError(f"policy update failed: {response.status_code}")

    def run(self, max_steps: int | None = None) -> AgentStatus:
        """Start a remote run and follow its event stream to completion."""
        record = self.client.request("GET", f"/conversations/{self.id}").json()
        settled_before = record["event_count"]
        body: dict[str, Any] = {}
        if max_steps is not None:
            body["max_steps"] = max_steps
        response = self.client.request(
            "POST", f"/conversations/{self.id}/run", json=body
        )
        if response.status_code == 409:
            raise AlreadyRunning("this conversation is already running")
        if response.status_code >= 400:
            raise AgentRtError(f"run failed to start: {response.status_code}")

        terminal = {
            AgentStatus.IDLE,
            AgentStatus.PAUSED,
            AgentStatus.WAITING_FOR_CONFIRMATION,
            AgentStatus.FINISHED,
            AgentStatus.STUCK,
            AgentStatus.ERROR,
        }
        attempts = 0
        while True:
            try:
                for frame in self.client.ws_events(self.id, since=len(self._events)):
                    event = self._ingest(frame)
                    if (
                        event is not None
                        and isinstance(event, ConversationStateUpdateEvent)
                        and event.field == "agent_status"
                        and frame["index"] >= settled_before
                        and AgentStatus(event.value) in terminal
                        and AgentStatus(event.value) is not AgentStatus.RUNNING
                    ):
                        return self._status
                attempts += 1
            except AgentRtError:
                raise
            except Exception:
                attempts += 1
            if attempts > 50:
                raise AgentRtError("event stream kept dropping; giving up on this run")

    def pause(self) -> None:
        response = self.client.request("POST", f"/conversations/{self.id}/pause")
        if response.status_code >= 400:
            raise AgentRtError(f"pause failed: {response.status_code}")

    def confirm(self, decision: str, note: str = "") -> AgentStatus:
        response = self.client.request(
            "POST",
            f"/conversations/{self.id}/confirmation",
            json={"decision": decision, "note": note},
        )
        if response.status_code == 409:
            raise NoPendingAction("no action is waiting for confirmation")
        if response.status_code >= 400:
            raise AgentRtError(f"confirmation failed: {response.status_code}")
        self.sync()
        return self._status


class Conversation:
    """Factory: hand it a remote workspace and you get a RemoteConversation,
    anything else a LocalConversation.

    >>> convo = Conversation(agent_config)                    # doctest: +SKIP
    >>> convo = Conversation(agent_config, Workspace(host=url, api_key=key))  # doctest: +SKIP
    """

    def __new__(  # type: ignore[misc]
        cls,
        agent: AgentConfig,
        workspace: LocalWorkspace | RemoteWorkspace | str | Path | None = None,
        **kwargs: Any,
    ) -> "LocalConversation | RemoteConversation":
        if isinstance(workspace, RemoteWorkspace):
            return RemoteConversation(agent, workspace, **kwargs)
        return LocalConversation(agent, workspace, **kwargs)
