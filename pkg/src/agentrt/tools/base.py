"""Tool plumbing: definitions, validation, registry, and schema exchange.

A tool is three things: a parameter schema (see :mod:`agentrt.schema`), an
executor turning a validated :class:`Action` into an :class:`Observation`,
and a name the model calls it by.  Agent configurations stay pure data by
referring to tools as :class:`ToolSpec` entries; the registry turns a spec
plus a :class:`ToolContext` into a live :class:`ToolDefinition` at
conversation start.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Mapping

from pydantic import BaseModel, ConfigDict, JsonValue

from ..errors import AgentRtError
from ..schema import check_schema, normalize_schema, validate_args

if TYPE_CHECKING:
    from ..llm import LLMProfile, RouterProfile
    from ..secrets import SecretRegistry
    from ..workspace import LocalWorkspace, RemoteWorkspace

_NAME_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_-]*$")


class UnknownTool(AgentRtError):
    """No resolver is registered under the requested name."""


class ResolverFailure(AgentRtError):
    """A resolver blew up while building its ToolDefinition."""


class ToolError(AgentRtError):
    """Base class for failures inside tool executors."""


@dataclass(frozen=True, slots=True)
class Action:
    """A validated request to run one tool."""

    tool_name: str
    arguments: Mapping[str, Any]


@dataclass(frozen=True, slots=True)
class Observation:
    """What running a tool produced.

    ``result`` is the structured payload (JSON-serializable); ``llm_text``
    is the rendering the model reads and must never be empty.
    """

    tool_name: str
    llm_text: str
    result: Any = None
    is_error: bool = False

    def __post_init__(self) -> None:
        if not self.llm_text:
            raise ValueError("llm_text must not be empty")


@dataclass(frozen=True)
class ToolDefinition:
    """A live tool: schema plus executor.

    ``terminal`` marks tools whose successful run ends the conversation
    (the finish tool).  The schema is checked against the supported dialect
    at construction, so a bad tool fails at registration, not mid-run.
    """

    name: str
    description: str
    action_schema: Mapping[str, Any]
    executor: Callable[[Action], Observation]
    terminal: bool = False

    def __post_init__(self) -> None:
        if not _NAME_RE.match(self.name):
            raise ValueError(
                f"tool name {self.name!r} must match {_NAME_RE.pattern}"
            )
        check_schema(self.action_schema)

    def validate_action(self, raw_arguments: Any) -> Action:
        """Check raw arguments against the schema; SchemaViolation on error."""
        return Action(
            tool_name=self.name,
            arguments=validate_args(self.action_schema, raw_arguments),
        )

    def __call__(self, action: Action) -> Observation:
        return self.executor(action)


class ToolSpec(BaseModel):
    """Serializable reference to a registered tool, with setup parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str
    params: dict[str, JsonValue] = {}


@dataclass
class ToolContext:
    """Everything a resolver may need to wire an executor.

    Conversations build one of these; standalone use (tests, scripts) can
    fill in only what the tool at hand touches.
    """

    working_dir: Path
    secret_registry: "SecretRegistry | None" = None
    workspace: "LocalWorkspace | RemoteWorkspace | None" = None
    llm: "LLMProfile | RouterProfile | None" = None
    persistence_dir: Path | None = None
    tool_specs: tuple[ToolSpec, ...] = ()
    extras: dict[str, Any] = field(default_factory=dict)


Resolver = Callable[[ToolSpec, ToolContext], ToolDefinition]

_REGISTRY: dict[str, Resolver] = {}


def register_tool(name: str, resolver: Resolver) -> None:
    """Register (or replace) the resolver behind a tool name."""
    if not _NAME_RE.match(name):
        raise ValueError(f"tool name {name!r} must match {_NAME_RE.pattern}")
    _REGISTRY[name] = resolver


def registered_tools() -> list[str]:
    return sorted(_REGISTRY)


def resolve_tool(spec: ToolSpec, context: ToolContext) -> ToolDefinition:
    """Turn a spec into a live definition via the registry."""
    try:
        resolver = _REGISTRY[spec.name]
    except KeyError:
        raise UnknownTool(
            f"no tool named {spec.name!r}; registered: {registered_tools()}"
        ) from None
    try:
        return resolver(spec, context)
    except AgentRtError:
        raise
    except Exception as exc:
        raise ResolverFailure(f"resolver for {spec.name!r} failed: {exc}") from exc


# --------------------------------------------------------------------------
# Schema exchange


def to_chat_tool(tool: ToolDefinition, *, extra_properties: Mapping[str, Any] | None = None) -> dict:
    """Chat-completions function declaration for this tool."""
    parameters = normalize_schema(tool.action_schema)
    if extra_properties:
        parameters["properties"] = {**parameters["properties"], **extra_properties}
    return {
        "type": "function",
        "function": {
            "name": tool.name,
            "description": tool.description,
            "parameters": parameters,
        },
    }


def to_mcp_schema(tool: ToolDefinition) -> dict:
    """The tool's parameter schema as an MCP-style inputSchema."""
    return normalize_schema(tool.action_schema)


@dataclass(frozen=True)
class ActionValidator:
    """Validation-only view of a tool schema imported from elsewhere."""

    name: str
    action_schema: Mapping[str, Any]

    def validate_action(self, raw_arguments: Any) -> Action:
        return Action(
            tool_name=self.name,
            arguments=validate_args(self.action_schema, raw_arguments),
        )


def from_mcp_schema(name: str, input_schema: Mapping[str, Any]) -> ActionValidator:
    """Adopt a foreign inputSchema, rejecting anything outside the dialect.

    Round trip invariant: feeding :func:`to_mcp_schema` output back through
    here yields a validator that accepts and rejects exactly like the
    original tool.
    """
    return ActionValidator(name=name, action_schema=normalize_schema(input_schema))
