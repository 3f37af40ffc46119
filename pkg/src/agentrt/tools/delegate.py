"""Delegation tool: fan a list of subtasks out to child conversations.

Each task becomes a fresh conversation sharing the parent's workspace and
model configuration (overridable per child through tool params).  The call
blocks until every child settles, then reports per-task outcomes in one
observation; one child failing does not sink the rest.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING, Any

from pydantic import TypeAdapter

from ..errors import AgentRtError
from .base import Action, Observation, ToolContext, ToolDefinition, ToolSpec, register_tool

if TYPE_CHECKING:
    from ..agent import AgentConfig

MAX_PARALLEL_TASKS = 4


class ChildFailure(AgentRtError):
    """A child conversation died before producing any result."""


def _delegate_schema(max_tasks: int) -> dict:
    return {
        "type": "object",
        "description": "Run independent subtasks in parallel child agents.",
        "properties": {
            "tasks": {
                "type": "array",
                "items": {
                    "type": "string",
                    "description": "Standalone instructions for one child.",
                },
                "minItems": 1,
                "maxItems": max_tasks,
                "description": "One entry per child conversation.",
            },
        },
        "required": ["tasks"],
    }


def _final_text(conversation: Any) -> str:
    """The child's last word: finish summary or last assistant message."""
    from ..events import ActionEvent, MessageEvent, ObservationEvent

    last = ""
    for event in conversation.state.events:
        if isinstance(event, MessageEvent) and event.role == "assistant":
            text = "".join(
                getattr(part, "text", "") for part in event.content
            ).strip()
            if text:
                last = text
        elif isinstance(event, ActionEvent) and event.tool_name == "finish":
            summary = event.arguments.get("summary") if isinstance(event.arguments, dict) else None
            if summary:
                last = str(summary)
    return last or "(no final message)"


def _run_child(index: int, task: str, config: "AgentConfig", context: ToolContext) -> dict:
    from ..conversation import LocalConversation

    persistence = None
    if context.persistence_dir is not None:
        persistence = context.persistence_dir / "children" / f"{index:02d}"
    try:
        child = LocalConversation(
            config,
            workspace=context.workspace,
            working_dir=context.working_dir,
            persistence_dir=persistence,
            secret_registry=context.secret_registry,
        )
        child.send_message(task)
        status = child.run()
        return {
            "task": task,
            "status": status.value,
            "result": _final_text(child),
        }
    except Exception as exc:
        return {
            "task": task,
            "status": "failed",
            "error": f"{type(exc).__name__}: {exc}",
        }


def _child_config(spec: ToolSpec, context: ToolContext) -> "AgentConfig":
    from ..agent import AgentConfig
    from ..llm import LLMProfile, RouterProfile

    parent: AgentConfig | None = context.extras.get("agent_config")
    if parent is not None:
        config = parent
    else:
        if context.llm is None:
            raise ChildFailure("delegate needs an agent config or an llm in context")
        config = AgentConfig(llm=context.llm, tool_specs=context.tool_specs)

    # Children never get the delegate tool back: one level of fan-out only.
    child_tools = tuple(s for s in config.tool_specs if s.name != "delegate")

    llm = config.llm
    if "child_llm" in spec.params:
        adapter: TypeAdapter = TypeAdapter(LLMProfile | RouterProfile)
        llm = adapter.validate_python(spec.params["child_llm"])

    return config.model_copy(update={"tool_specs": child_tools, "llm": llm})


def build_delegate_tool(spec: ToolSpec, context: ToolContext) -> ToolDefinition:
    max_tasks = int(spec.params.get("max_tasks", MAX_PARALLEL_TASKS))

    def execute(action: Action) -> Observation:
        tasks = list(action.arguments["tasks"])
        config = _child_config(spec, context)
        with ThreadPoolExecutor(max_workers=len(tasks)) as pool:
            outcomes = list(
                pool.map(
                    lambda pair: _run_child(pair[0], pair[1], config, context),
                    enumerate(tasks),
                )
            )
        lines = []
        for i, outcome in enumerate(outcomes, start=1):
            if "error" in outcome:
                lines.append(f"{i}. [failed] {outcome['task']}: {outcome['error']}")
            else:
                lines.append(
                    f"{i}. [{outcome['status']}] {outcome['task']}: {outcome['result']}"
                )
        all_failed = all("error" in o for o in outcomes)
        return Observation(
            tool_name="delegate",
            llm_text="Delegated task results:\n" + "\n".join(lines),
            result={"outcomes": outcomes},
            is_error=all_failed,
        )

    return ToolDefinition(
        name="delegate",
        description=(
            "Split independent subtasks across parallel child agents that "
            "share this workspace, and collect their results."
        ),
        action_schema=_delegate_schema(max_tasks),
        executor=execute,
    )


register_tool("delegate", build_delegate_tool)
