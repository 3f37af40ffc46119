"""Shared fixtures and builders for the test suite.

Everything here runs offline: LLM profiles are scripted, workspaces live
under pytest tmp dirs, and the server (where needed) is hosted in-process.
"""

from __future__ import annotations

import pytest

from agentrt import (
    AgentConfig,
    LLMProfile,
    ScriptedReply,
    ScriptedToolCall,
    ToolSpec,
)


def scripted_llm(*replies: ScriptedReply, **overrides) -> LLMProfile:
    """Build a scripted profile; keyword overrides go to LLMProfile."""
    params = {"model": "scripted-test", "scripted_responses": tuple(replies)}
    params.update(overrides)
    return LLMProfile(**params)


def bash_reply(command: str, text: str = "") -> ScriptedReply:
    return ScriptedReply(
        text=text,
        tool_calls=(ScriptedToolCall(name="bash", arguments={"command": command}),),
    )


def finish_reply(summary: str = "all done") -> ScriptedReply:
    return ScriptedReply(
        tool_calls=(ScriptedToolCall(name="finish", arguments={"summary": summary}),),
    )


def plain_reply(text: str) -> ScriptedReply:
    return ScriptedReply(text=text)


def basic_config(llm: LLMProfile, *tool_names: str, **overrides) -> AgentConfig:
    names = tool_names or ("bash", "finish")
    params = {
        "llm": llm,
        "tool_specs": tuple(ToolSpec(name=n) for n in names),
    }
    params.update(overrides)
    return AgentConfig(**params)


@pytest.fixture
def workdir(tmp_path):
    d = tmp_path / "work"
    d.mkdir()
    return d


@pytest.fixture
def state_dir(tmp_path):
    d = tmp_path / "state"
    return d
