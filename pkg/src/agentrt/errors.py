"""Exception base classes shared across the runtime.

Every error raised by this package derives from :class:`AgentRtError` so
callers can catch the whole family with one clause.  Module-specific
exceptions live next to the code that raises them; only the base and the
handful of truly cross-cutting errors are defined here.
"""

from __future__ import annotations


class AgentRtError(Exception):
    """Base class for all errors raised by this package.

    ``state_consistent`` tells the state-lock wrapper whether the mutation
    that raised left the conversation state fully rolled back.  Errors that
    guarantee rollback set it to True and escape without poisoning the lock;
    anything else (including arbitrary user exceptions) poisons.
    """

    state_consistent: bool = False


class LockPoisoned(AgentRtError):
    """The conversation state may be half-mutated; refuse further access."""


class PersistenceFailure(AgentRtError):
    """A durable write failed.  In-memory state was rolled back first."""

    state_consistent = True


class CorruptState(AgentRtError):
    """base_state.json is missing, unreadable, or fails validation."""


class CorruptEvent(AgentRtError):
    """An event file on disk could not be parsed back into an event."""

    def __init__(self, path: str, reason: str) -> None:
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason
