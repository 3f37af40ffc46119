"""agentrt: an event-sourced runtime for tool-using LLM agents.

The pieces, roughly inside-out:

- :mod:`agentrt.events` — the immutable event log every conversation is made of
- :mod:`agentrt.llm` — messages, model profiles (scriptable offline), routing
- :mod:`agentrt.tools` — tool definitions, builtins, and the MCP adapter
- :mod:`agentrt.agent` — the stateless step function and its configuration
- :mod:`agentrt.conversation` — run loops, local and remote
- :mod:`agentrt.server` — REST + WebSocket hosting for many conversations
"""

from .agent import (
    AgentConfig,
    AgentContext,
    Skill,
    StepOutcome,
    detect_stuck,
    discover_skills,
    generate_title,
    load_skills,
    step,
)
from .condenser import CondenserPolicy, SummarizerFailure
from .conversation import (
    AlreadyRunning,
    Conversation,
    LocalConversation,
    RemoteConversation,
)
from .errors import (
    AgentRtError,
    CorruptEvent,
    CorruptState,
    LockPoisoned,
    PersistenceFailure,
)
from .events import (
    ActionEvent,
    AgentErrorEvent,
    BaseEvent,
    Condensation,
    CondensationRequest,
    CondensationSummaryEvent,
    ConversationStateUpdateEvent,
    DanglingForgottenId,
    Event,
    MessageEvent,
    ObservationEvent,
    PauseEvent,
    SchemaViolation,
    SystemPromptEvent,
    UnknownKind,
    UserRejectObservation,
    apply_condensations,
    deserialize_event,
    serialize_event,
    to_llm_messages,
)
from .llm import (
    ImagePart,
    LLMProfile,
    LLMResponse,
    Message,
    RouterProfile,
    ScriptedReply,
    ScriptedToolCall,
    TextPart,
    ToolCall,
    complete,
    record_usage,
    route_complete,
)
from .secrets import SECRET_MASK, CallableSource, SecretRegistry, StaticValue
from .security import (
    AlwaysConfirm,
    ConfirmRisky,
    ConfirmationPolicy,
    NeverConfirm,
    NoPendingAction,
    RiskLevel,
    requires_confirmation,
)
from .state import (
    AgentStatus,
    ConversationState,
    ConversationStats,
    EventLog,
    FIFOLock,
    load_state,
    persist_snapshot,
)
from .tools import (
    Action,
    Observation,
    ToolContext,
    ToolDefinition,
    ToolSpec,
    UnknownTool,
    register_tool,
    resolve_tool,
)
from .workspace import (
    DockerWorkspace,
    LocalWorkspace,
    PathEscape,
    RemoteWorkspace,
    Workspace,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionEvent",
    "AgentConfig",
    "AgentContext",
    "AgentErrorEvent",
    "AgentRtError",
    "AgentStatus",
    "AlreadyRunning",
    "AlwaysConfirm",
    "BaseEvent",
    "CallableSource",
    "Condensation",
    "CondensationRequest",
    "CondensationSummaryEvent",
    "CondenserPolicy",
    "ConfirmRisky",
    "ConfirmationPolicy",
    "Conversation",
    "ConversationState",
    "ConversationStateUpdateEvent",
    "ConversationStats",
    "CorruptEvent",
    "CorruptState",
    "DanglingForgottenId",
    "DockerWorkspace",
    "Event",
    "EventLog",
    "FIFOLock",
    "ImagePart",
    "LLMProfile",
    "LLMResponse",
    "LocalConversation",
    "LocalWorkspace",
    "LockPoisoned",
    "Message",
    "MessageEvent",
    "NeverConfirm",
    "NoPendingAction",
    "Observation",
    "ObservationEvent",
    "PathEscape",
    "PauseEvent",
    "PersistenceFailure",
    "RemoteConversation",
    "RemoteWorkspace",
    "RiskLevel",
    "RouterProfile",
    "SECRET_MASK",
    "SchemaViolation",
    "ScriptedReply",
    "ScriptedToolCall",
    "SecretRegistry",
    "Skill",
    "StaticValue",
    "StepOutcome",
    "SummarizerFailure",
    "SystemPromptEvent",
    "TextPart",
    "ToolCall",
    "ToolContext",
    "ToolDefinition",
    "ToolSpec",
    "UnknownKind",
    "UnknownTool",
    "UserRejectObservation",
    "Workspace",
    "apply_condensations",
    "complete",
    "deserialize_event",
    "detect_stuck",
    "discover_skills",
    "generate_title",
    "load_skills",
    "load_state",
    "persist_snapshot",
    "record_usage",
    "register_tool",
    "requires_confirmation",
    "resolve_tool",
    "route_complete",
    "serialize_event",
    "step",
    "to_llm_messages",
]
