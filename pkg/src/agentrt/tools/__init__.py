"""Tool system: definitions, registry, builtins, and the MCP adapter.

Importing this package registers the builtin tools (bash, file, finish,
delegate) so ``ToolSpec(name="bash")`` resolves out of the box.
"""

from .base import (
    Action,
    ActionValidator,
    Observation,
    ResolverFailure,
    ToolContext,
    ToolDefinition,
    ToolError,
    ToolSpec,
    UnknownTool,
    from_mcp_schema,
    register_tool,
    registered_tools,
    resolve_tool,
    to_chat_tool,
    to_mcp_schema,
)
from . import bash as _bash  # noqa: F401  (registers "bash")
from . import delegate as _delegate  # noqa: F401  (registers "delegate")
from . import files as _files  # noqa: F401  (registers "file")
from . import finish as _finish  # noqa: F401  (registers "finish")
from .bash import BashSession
from .delegate import ChildFailure
from .files import AmbiguousReplace, MissingFile
from .mcp import (
    InProcessMcpServer,
    McpError,
    load_mcp_tools,
    register_mcp_transport,
    wrap_mcp_tool,
)

__all__ = [
    "Action",
    "ActionValidator",
    "AmbiguousReplace",
    "BashSession",
    "ChildFailure",
    "InProcessMcpServer",
    "McpError",
    "MissingFile",
    "Observation",
    "ResolverFailure",
    "ToolContext",
    "ToolDefinition",
    "ToolError",
    "ToolSpec",
    "UnknownTool",
    "from_mcp_schema",
    "load_mcp_tools",
    "register_mcp_transport",
    "register_tool",
    "registered_tools",
    "resolve_tool",
    "to_chat_tool",
    "to_mcp_schema",
    "wrap_mcp_tool",
]
