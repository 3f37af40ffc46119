"""Adapter for MCP-style tool servers.

A transport here is just a callable taking one JSON-RPC-shaped request dict
and returning a response dict; how the bytes move (stdio, HTTP, in-process)
is the caller's business.  :func:`load_mcp_tools` asks the server what it
offers and wraps each entry as a regular :class:`ToolDefinition`, so agents
cannot tell adapted tools from builtin ones.

Schemas outside the supported parameter dialect are rejected at load time,
tool by tool, rather than silently accepting arguments we cannot validate.
"""

from __future__ import annotations

from typing import Any, Callable, Mapping

from ..errors import AgentRtError
from ..schema import UnsupportedSchemaFeature, normalize_schema
from .base import Action, Observation, ToolContext, ToolDefinition, ToolSpec, register_tool

McpTransport = Callable[[dict], dict]


class McpError(AgentRtError):
    """The server answered with an error or an unusable payload."""


def _call(transport: McpTransport, method: str, params: dict | None = None) -> Any:
    request: dict[str, Any] = {"method": method}
    if params is not None:
        request["params"] = params
    try:
        response = transport(request)
    except Exception as exc:
        raise McpError(f"transport failed for {method}: {exc}") from exc
    if not isinstance(response, dict):
        raise McpError(f"{method} returned {type(response).__name__}, not an object")
    if "error" in response:
        error = response["error"]
        message = error.get("message", error) if isinstance(error, dict) else error
        raise McpError(f"{method} failed: {message}")
    return response.get("result")


def _render_content(content: Any) -> str:
    if not isinstance(content, list):
        return str(content)
    parts = []
    for item in content:
        if isinstance(item, Mapping) and item.get("type") == "text":
            parts.append(str(item.get("text", "")))
        else:
            parts.append(str(item))
    return "\n".join(parts) if parts else "(empty result)"


def wrap_mcp_tool(
    transport: McpTransport,
    name: str,
    description: str,
    input_schema: Mapping[str, Any],
) -> ToolDefinition:
    schema = normalize_schema(input_schema)  # UnsupportedSchemaFeature on bad dialect

    def execute(action: Action) -> Observation:
        result = _call(
            transport,
            "tools/call",
            {"name": name, "arguments": dict(action.arguments)},
        )
        if not isinstance(result, Mapping):
            raise McpError(f"tools/call for {name} returned no result object")
        text = _render_content(result.get("content"))
        return Observation(
            tool_name=name,
            llm_text=text or "(empty result)",
            result=dict(result),
            is_error=bool(result.get("isError", False)),
        )

    return ToolDefinition(
        name=name,
        description=description,
        action_schema=schema,
        executor=execute,
    )


def load_mcp_tools(
    transport: McpTransport,
    *,
    strict: bool = True,
) -> list[ToolDefinition]:
    """Fetch every tool the server lists.

    With ``strict`` (the default) one unsupported schema fails the whole
    load; otherwise that tool is skipped and the rest come through.
    """
    result = _call(transport, "tools/list")
    if not isinstance(result, Mapping) or not isinstance(result.get("tools"), list):
        raise McpError("tools/list did not return a tools array")
    tools: list[ToolDefinition] = []
    for entry in result["tools"]:
        try:
            tools.append(
                wrap_mcp_tool(
                    transport,
                    entry["name"],
                    entry.get("description", ""),
                    entry.get("inputSchema", {"type": "object", "properties": {}}),
                )
            )
        except UnsupportedSchemaFeature:
            if strict:
                raise
        except KeyError as exc:
            raise McpError(f"tools/list entry missing {exc}") from exc
    return tools


class InProcessMcpServer:
    """A tiny MCP-shaped server for tests and local composition.

    Register plain functions with their schemas; :attr:`transport` plugs
    straight into :func:`load_mcp_tools`.
    """

    def __init__(self) -> None:
        self._tools: dict[str, tuple[str, dict, Callable[..., Any]]] = {}

    def add_tool(
        self,
        name: str,
        description: str,
        input_schema: dict,
        fn: Callable[..., Any],
    ) -> None:
        self._tools[name] = (description, input_schema, fn)

    def transport(self, request: dict) -> dict:
        method = request.get("method")
        if method == "tools/list":
            return {
                "result": {
                    "tools": [
                        {"name": name, "description": desc, "inputSchema": schema}
                        for name, (desc, schema, _) in self._tools.items()
                    ]
                }
            }
        if method == "tools/call":
            params = request.get("params") or {}
            name = params.get("name")
            if name not in self._tools:
                return {"error": {"message": f"no tool named {name!r}"}}
            _, _, fn = self._tools[name]
            try:
                value = fn(**(params.get("arguments") or {}))
            except Exception as exc:
                return {
                    "result": {
                        "content": [{"type": "text", "text": f"{type(exc).__name__}: {exc}"}],
                        "isError": True,
                    }
                }
            return {
                "result": {
                    "content": [{"type": "text", "text": str(value)}],
                    "isError": False,
                }
            }
        return {"error": {"message": f"unknown method {method!r}"}}


def register_mcp_transport(name: str, transport: McpTransport) -> None:
    """Expose one server's tools through the regular tool registry.

    After registration, ``ToolSpec(name=..., params={"tool": "<remote name>"})``
    resolves to the adapted tool, so agent configs stay pure data even when
    the tool lives in another process.
    """

    def resolver(spec: ToolSpec, context: ToolContext) -> ToolDefinition:
        wanted = str(spec.params.get("tool", spec.name))
        for tool in load_mcp_tools(transport, strict=False):
            if tool.name == wanted:
                return tool
        raise McpError(f"server {name!r} offers no tool named {wanted!r}")

    register_tool(name, resolver)
