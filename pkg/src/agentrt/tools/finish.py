"""The finish tool: how the model declares the task done.

Marked terminal, so a successful run flips the conversation to finished and
the run loop stops without another model call.
"""

from __future__ import annotations

from .base import Action, Observation, ToolContext, ToolDefinition, ToolSpec, register_tool

FINISH_SCHEMA = {
    "type": "object",
    "description": "Declare the task complete.",
    "properties": {
        "summary": {
            "type": "string",
            "minLength": 1,
            "description": "What was accomplished, for the human reading along.",
        },
    },
    "required": ["summary"],
}


def build_finish_tool(spec: ToolSpec, context: ToolContext) -> ToolDefinition:
    def execute(action: Action) -> Observation:
        summary = action.arguments["summary"]
        return Observation(
            tool_name="finish",
            llm_text=f"Task marked finished: {summary}",
            result={"summary": summary},
        )

    return ToolDefinition(
        name="finish",
        description="Declare the task complete and end the run.",
        action_schema=FINISH_SCHEMA,
        executor=execute,
        terminal=True,
    )


register_tool("finish", build_finish_tool)
