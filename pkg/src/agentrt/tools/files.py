"""File manipulation tool: read, write, and targeted replace.

All paths resolve inside the conversation's working directory; anything that
escapes (absolute paths elsewhere, ``..`` tricks) raises PathEscape before
touching the filesystem.  Replace demands a unique match so the model cannot
silently edit the wrong occurrence.
"""

from __future__ import annotations

from ..errors import AgentRtError
from ..workspace import resolve_inside
from .base import Action, Observation, ToolContext, ToolDefinition, ToolSpec, register_tool

DEFAULT_MAX_READ_LINES = 2000


class FileToolError(AgentRtError):
    pass


class MissingFile(FileToolError):
    """Read or replace aimed at a path that does not exist."""


class AmbiguousReplace(FileToolError):
    """The old text appears zero or multiple times; refusing to guess."""


class MissingArgument(FileToolError):
    """The chosen op needs an argument that was not supplied."""


FILE_SCHEMA = {
    "type": "object",
    "description": "Read, create, or edit a file inside the workspace.",
    "properties": {
        "op": {
            "type": "string",
            "enum": ["read", "write", "replace"],
            "description": "What to do with the file.",
        },
        "path": {
            "type": "string",
            "minLength": 1,
            "description": "Path relative to the workspace root.",
        },
        "content": {
            "type": "string",
            "description": "Full file content (op=write).",
        },
        "old": {
            "type": "string",
            "description": "Exact text to replace; must occur exactly once (op=replace).",
        },
        "new": {
            "type": "string",
            "description": "Replacement text (op=replace).",
        },
    },
    "required": ["op", "path"],
}


def _read(path, max_lines: int) -> Observation:
    if not path.is_file():
        raise MissingFile(f"{path.name}: no such file")
    text = path.read_text(encoding="utf-8", errors="replace")
    lines = text.splitlines()
    shown = lines[:max_lines]
    numbered = "\n".join(f"{i + 1:6d}\t{line}" for i, line in enumerate(shown))
    if len(lines) > max_lines:
        numbered += f"\n[... {len(lines) - max_lines} more lines not shown ...]"
    if not lines:
        numbered = "(empty file)"
    return Observation(
        tool_name="file",
        llm_text=numbered,
        result={"op": "read", "lines": len(lines)},
    )


def _write(path, content: str | None) -> Observation:
    if content is None:
        raise MissingArgument("write needs 'content'")
    path.parent.mkdir(parents=True, exist_ok=True)
    existed = path.exists()
    path.write_text(content, encoding="utf-8")
    verb = "Updated" if existed else "Created"
    return Observation(
        tool_name="file",
        llm_text=f"{verb} {path.name} ({len(content)} characters).",
        result={"op": "write", "bytes": len(content.encode())},
    )


def _replace(path, old: str | None, new: str | None) -> Observation:
    if old is None or new is None:
        raise MissingArgument("replace needs 'old' and 'new'")
    if not path.is_file():
        raise MissingFile(f"{path.name}: no such file")
    text = path.read_text(encoding="utf-8")
    count = text.count(old)
    if count == 0:
        raise AmbiguousReplace("old text not found in the file")
    if count > 1:
        raise AmbiguousReplace(
            f"old text occurs {count} times; include more context to make it unique"
        )
    path.write_text(text.replace(old, new, 1), encoding="utf-8")
    return Observation(
        tool_name="file",
        llm_text=f"Replaced one occurrence in {path.name}.",
        result={"op": "replace"},
    )


def build_file_tool(spec: ToolSpec, context: ToolContext) -> ToolDefinition:
    max_lines = int(spec.params.get("max_read_lines", DEFAULT_MAX_READ_LINES))
    root = context.working_dir

    def execute(action: Action) -> Observation:
        args = action.arguments
        target = resolve_inside(root, args["path"])
        op = args["op"]
        if op == "read":
            return _read(target, max_lines)
        if op == "write":
            return _write(target, args.get("content"))
        return _replace(target, args.get("old"), args.get("new"))

    return ToolDefinition(
        name="file",
        description=(
            "Read a file (numbered lines), write a file whole, or replace "
            "one unique occurrence of text inside it."
        ),
        action_schema=FILE_SCHEMA,
        executor=execute,
    )


register_tool("file", build_file_tool)
