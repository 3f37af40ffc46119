"""Mutable conversation state and its durability story.

Everything else in the runtime is immutable data; this module owns the one
mutable object, :class:`ConversationState`, and guards it with a reentrant
FIFO lock.  Mutations go through :func:`with_state_lock`, which poisons the
state if a mutation escapes half-done, so later callers fail loudly instead
of reading torn data.

Persistence is dual-path: ``base_state.json`` snapshots the metadata, and
each event is its own file named ``<6-digit-index>-<event-id>.json``.  Every
metadata change is also recorded as a ConversationStateUpdateEvent *before*
the base file is rewritten, so a crash between the two writes reconciles on
resume by replaying the log over the stale base.
"""

from __future__ import annotations

import enum
import json
import os
import threading
from collections import deque
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Iterator, Sequence

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter

from .errors import AgentRtError, CorruptEvent, CorruptState, LockPoisoned, PersistenceFailure
from .events import (
    ActionEvent,
    AgentErrorEvent,
    BaseEvent,
    ConversationStateUpdateEvent,
    ObservationEvent,
    UserRejectObservation,
    deserialize_event,
    serialize_event,
)
from .ids import new_id
from .llm import ToolCall
from .security import ConfirmationPolicy, NeverConfirm

BASE_STATE_FILE = "base_state.json"
EVENTS_DIR = "events"


class AgentStatus(str, enum.Enum):
    IDLE = "idle"
    RUNNING = "running"
    PAUSED = "paused"
    WAITING_FOR_CONFIRMATION = "waiting_for_confirmation"
    FINISHED = "finished"
    STUCK = "stuck"
    ERROR = "error"


class ConversationStats(BaseModel):
    """Running usage totals.  Counters only ever grow."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    prompt_tokens: int = Field(default=0, ge=0)
    completion_tokens: int = Field(default=0, ge=0)
    total_cost: float = Field(default=0.0, ge=0.0)
    llm_calls: int = Field(default=0, ge=0)


_POLICY_ADAPTER: TypeAdapter = TypeAdapter(ConfirmationPolicy)


class FIFOLock:
    """Reentrant lock that grants waiters strictly in arrival order.

    Release hands ownership directly to the oldest waiter, so a stampede of
    threads cannot starve any one of them and acquisition order is exactly
    request order.
    """

    def __init__(self) -> None:
        self._mutex = threading.Lock()
        self._owner: int | None = None
        self._depth = 0
        self._waiters: deque[tuple[int, threading.Event]] = deque()

    def acquire(self, timeout: float | None = None) -> bool:
        me = threading.get_ident()
        with self._mutex:
            if self._owner == me:
                self._depth += 1
                return True
            if self._owner is None and not self._waiters:
                self._owner = me
                self._depth = 1
                return True
            gate = threading.Event()
            ticket = (me, gate)
            self._waiters.append(ticket)
        if gate.wait(timeout):
            return True
        with self._mutex:
            try:
                self._waiters.remove(ticket)
                return False
            except ValueError:
                # Ownership was handed over while we were timing out.
                return True

    def release(self) -> None:
        me = threading.get_ident()
        with self._mutex:
            if self._owner != me:
                raise RuntimeError("release by a thread that does not hold the lock")
            self._depth -= 1
            if self._depth > 0:
                return
            if self._waiters:
                tid, gate = self._waiters.popleft()
                self._owner = tid
                self._depth = 1
                gate.set()
            else:
                self._owner = None

    def owned(self) -> bool:
        return self._owner == threading.get_ident()

    @property
    def depth(self) -> int:
        return self._depth if self.owned() else 0


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.parent / f".{path.name}.tmp"
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise PersistenceFailure(f"could not write {path}: {exc}") from exc


def event_filename(index: int, event_id: str) -> str:
    return f"{index:06d}-{event_id}.json"


class EventLog:
    """Append-only event sequence with optional per-event files.

    The disk write happens before the in-memory append, so a failed write
    leaves the log exactly as it was.
    """

    def __init__(
        self,
        events: Sequence[BaseEvent] = (),
        directory: Path | None = None,
        written: int = 0,
    ) -> None:
        self._events: list[BaseEvent] = list(events)
        self.directory = directory
        self._written = written

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[BaseEvent]:
        return iter(self._events)

    def __getitem__(self, index):
        return self._events[index]

    def view(self) -> tuple[BaseEvent, ...]:
        return tuple(self._events)

    def append(self, event: BaseEvent) -> int:
        index = len(self._events)
        if self.directory is not None and self._written == index:
            self._write_one(index, event)
            self._written = index + 1
        self._events.append(event)
        return index

    def flush(self) -> int:
        """Write any events not yet on disk; returns how many were written."""
        if self.directory is None:
            return 0
        count = 0
        while self._written < len(self._events):
            self._write_one(self._written, self._events[self._written])
            self._written += 1
            count += 1
        return count

    def _write_one(self, index: int, event: BaseEvent) -> None:
        assert self.directory is not None
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.directory / event_filename(index, event.id)
        _atomic_write(path, serialize_event(event).encode())


#: Metadata fields that update_metadata accepts, with (serialize, parse).
_METADATA_CODECS: dict[str, tuple[Callable[[Any], Any], Callable[[Any], Any]]] = {
    "agent_status": (lambda v: AgentStatus(v).value, lambda v: AgentStatus(v)),
    "stats": (
        lambda v: v.model_dump(),
        lambda v: ConversationStats.model_validate(v),
    ),
    "confirmation_policy": (
        lambda v: v.model_dump(),
        lambda v: _POLICY_ADAPTER.validate_python(v),
    ),
    "title": (lambda v: v, lambda v: v),
    "agent_calls": (lambda v: int(v), lambda v: int(v)),
}


class ConversationState:
    """The single mutable object behind a conversation.

    Read or written only under its FIFO lock (see :func:`with_state_lock`).
    Event appends queue observer notifications, which fire in append order
    once the outermost lock hold ends, so observers never run under the lock.
    """

    def __init__(
        self,
        conversation_id: str | None = None,
        *,
        persistence_dir: Path | str | None = None,
        confirmation_policy: ConfirmationPolicy | None = None,
        events: EventLog | None = None,
    ) -> None:
        self.conversation_id = conversation_id or new_id()
        self.agent_status = AgentStatus.IDLE
        self.stats = ConversationStats()
        self.confirmation_policy = confirmation_policy or NeverConfirm()
        self.title: str | None = None
        self.agent_calls = 0
        self.persistence_dir = Path(persistence_dir) if persistence_dir else None
        if events is not None:
            self.events = events
        else:
            directory = self.persistence_dir / EVENTS_DIR if self.persistence_dir else None
            self.events = EventLog(directory=directory)

        # Resume bookkeeping: an action that was appended but never got its
        # observation before the process died.  Consumed by the next step.
        self.pending_action_id: str | None = None

        self._lock = FIFOLock()
        self._poisoned = False
        self._callbacks: dict[int, Callable[[BaseEvent], None]] = {}
        self._next_callback_token = 1
        self._pending_notifications: deque[BaseEvent] = deque()
        self._notify_lock = threading.RLock()

        # Run-loop coordination (guarded by the state lock).
        self.pause_requested = False
        self.run_active = False
        self.queued_messages: list[BaseEvent] = []
        self.deferred_calls: list[ToolCall] = []

    # -- locking ------------------------------------------------------------

    @contextmanager
    def locked(self, timeout: float | None = None):
        if not self._lock.acquire(timeout):
            raise TimeoutError("could not acquire conversation state lock")
        if self._poisoned:
            self._lock.release()
            raise LockPoisoned(
                "a previous mutation died half-way; this state is unusable"
            )
        try:
            yield self
        except BaseException as exc:
            if not getattr(exc, "state_consistent", False):
                self._poisoned = True
            raise
        finally:
            outermost = self._lock.depth == 1
            self._lock.release()
            if outermost:
                self._dispatch_notifications()

    @property
    def poisoned(self) -> bool:
        return self._poisoned

    def assert_locked(self) -> None:
        if not self._lock.owned():
            raise RuntimeError("conversation state accessed without its lock")

    # -- observers ----------------------------------------------------------

    def add_callback(self, callback: Callable[[BaseEvent], None]) -> Callable[[], None]:
        """Register an observer for every appended event; returns a detach."""
        with self._notify_lock:
            token = self._next_callback_token
            self._next_callback_token += 1
            self._callbacks[token] = callback

        def detach() -> None:
            with self._notify_lock:
                self._callbacks.pop(token, None)

        return detach

    def _dispatch_notifications(self) -> None:
        while True:
            with self._notify_lock:
                if not self._pending_notifications:
                    return
                event = self._pending_notifications.popleft()
                callbacks = list(self._callbacks.values())
                for callback in callbacks:
                    try:
                        callback(event)
                    except Exception:
                        # Observers must never break the run loop.
                        pass


def with_state_lock(
    state: ConversationState,
    fn: Callable[[ConversationState], Any],
    *,
    timeout: float | None = None,
) -> Any:
    """Run ``fn(state)`` holding the state lock (reentrant, FIFO-fair)."""
    with state.locked(timeout):
        return fn(state)


def append_event(state: ConversationState, event: BaseEvent) -> int:
    """Append one event durably.  Caller must hold the state lock.

    The event file hits disk before the in-memory append; on write failure
    nothing changed and PersistenceFailure escapes without poisoning.
    """
    state.assert_locked()
    index = state.events.append(event)
    with state._notify_lock:
        state._pending_notifications.append(event)
    return index


def metadata_value_to_json(field: str, value: Any) -> Any:
    return _METADATA_CODECS[field][0](value)


def metadata_value_from_json(field: str, value: Any) -> Any:
    return _METADATA_CODECS[field][1](value)


def update_metadata(state: ConversationState, field: str, value: Any) -> int:
    """Change one metadata field durably.  Caller must hold the state lock.

    Order matters: the state-update event is appended (and persisted) first,
    then memory changes, then base_state.json is rewritten.  Any prefix of
    that sequence is recoverable.
    """
    state.assert_locked()
    if field not in _METADATA_CODECS:
        raise ValueError(
            f"unknown metadata field {field!r}; expected one of "
            f"{sorted(_METADATA_CODECS)}"
        )
    json_value = metadata_value_to_json(field, value)
    index = append_event(
        state,
        ConversationStateUpdateEvent(source="system", field=field, value=json_value),
    )
    setattr(state, field, value)
    if state.persistence_dir is not None:
        _write_base_state(state)
    return index


def _base_state_payload(state: ConversationState) -> dict:
    return {
        "conversation_id": state.conversation_id,
        "agent_status": state.agent_status.value,
        "stats": state.stats.model_dump(),
        "confirmation_policy": state.confirmation_policy.model_dump(),
        "title": state.title,
        "agent_calls": state.agent_calls,
        # Tool calls from a multi-call reply that have not been turned into
        # actions yet.  They exist nowhere in the event log, so losing them
        # across a restart would silently drop work the model asked for.
        "deferred_calls": [call.model_dump(mode="json") for call in state.deferred_calls],
    }


def _write_base_state(state: ConversationState) -> bool:
    assert state.persistence_dir is not None
    state.persistence_dir.mkdir(parents=True, exist_ok=True)
    path = state.persistence_dir / BASE_STATE_FILE
    data = (json.dumps(_base_state_payload(state), indent=2, sort_keys=True) + "\n").encode()
    if path.exists() and path.read_bytes() == data:
        return False
    _atomic_write(path, data)
    return True


def persist_snapshot(state: ConversationState) -> None:
    """Bring disk up to date with memory.  Idempotent: a second call with
    nothing changed writes nothing.  Caller must hold the state lock."""
    state.assert_locked()
    if state.persistence_dir is None:
        return
    state.events.flush()
    _write_base_state(state)


def find_pending_action(events: Sequence[BaseEvent]) -> ActionEvent | None:
    """Latest action that has no observation, rejection, or error yet."""
    settled: set[str] = set()
    for event in reversed(list(events)):
        if isinstance(event, (ObservationEvent, UserRejectObservation)):
            settled.add(event.tool_call_id)
        elif isinstance(event, AgentErrorEvent) and event.tool_call_id:
            settled.add(event.tool_call_id)
        elif isinstance(event, ActionEvent):
            if event.tool_call_id not in settled:
                return event
            return None
    return None


def load_state(persistence_dir: Path | str) -> ConversationState:
    """Rebuild a ConversationState from disk.

    The base file gives the starting metadata; replaying the log's
    state-update events on top reconciles any crash between an event append
    and the base rewrite.  A run interrupted mid-step comes back as idle,
    with ``pending_action_id`` set when an action never got its observation.
    """
    directory = Path(persistence_dir)
    base_path = directory / BASE_STATE_FILE
    try:
        base = json.loads(base_path.read_text())
    except FileNotFoundError as exc:
        raise CorruptState(f"no {BASE_STATE_FILE} in {directory}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptState(f"unreadable {base_path}: {exc}") from exc
    if not isinstance(base, dict) or "conversation_id" not in base:
        raise CorruptState(f"{base_path} is missing conversation_id")

    events_dir = directory / EVENTS_DIR
    events: list[BaseEvent] = []
    if events_dir.is_dir():
        for path in sorted(events_dir.iterdir()):
            if path.name.startswith(".") or path.suffix != ".json":
                continue
            try:
                events.append(deserialize_event(path.read_bytes()))
            except AgentRtError as exc:
                raise CorruptEvent(str(path), str(exc)) from exc
            except OSError as exc:
                raise CorruptEvent(str(path), f"unreadable: {exc}") from exc

    state = ConversationState(
        conversation_id=str(base["conversation_id"]),
        persistence_dir=directory,
        events=EventLog(events, directory=events_dir, written=len(events)),
    )
    try:
        for field in ("agent_status", "stats", "confirmation_policy", "title", "agent_calls"):
            if field in base and base[field] is not None:
                setattr(state, field, metadata_value_from_json(field, base[field]))
        state.deferred_calls = [
            ToolCall.model_validate(call) for call in base.get("deferred_calls", [])
        ]
    except Exception as exc:
        raise CorruptState(f"{base_path} failed validation: {exc}") from exc

    for event in events:
        if isinstance(event, ConversationStateUpdateEvent) and event.field in _METADATA_CODECS:
            try:
                setattr(
                    state,
                    event.field,
                    metadata_value_from_json(event.field, event.value),
                )
            except Exception as exc:
                raise CorruptEvent(event.id, f"bad state_update payload: {exc}") from exc

    if state.agent_status == AgentStatus.RUNNING:
        # The process died mid-run.  Land in idle; if an action never got
        # its observation, remember it so the next step re-executes it
        # instead of asking the model again.
        state.agent_status = AgentStatus.IDLE
        pending = find_pending_action(events)
        if pending is not None:
            state.pending_action_id = pending.id
    elif state.agent_status == AgentStatus.WAITING_FOR_CONFIRMATION:
        pending = find_pending_action(events)
        if pending is None:
            state.agent_status = AgentStatus.IDLE
    return state
