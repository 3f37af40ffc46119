"""Risk grading and confirmation gating for tool actions.

Risk forms a total order low < medium < high; "unknown" is anything the
analyzer could not grade and gates exactly like high, so nothing unknown is
ever auto-approved by a threshold policy.

Policies are data (serializable, comparable), and the decision function is
pure, which keeps the gate easy to test exhaustively.
"""

from __future__ import annotations

import enum
import shlex
from typing import Annotated, Any, Literal, Mapping, Union

from pydantic import BaseModel, ConfigDict, Field

from .errors import AgentRtError


class NoPendingAction(AgentRtError):
    """confirm() was called but nothing is waiting for a decision."""

    state_consistent = True


class RiskLevel(str, enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    UNKNOWN = "unknown"


_RANK = {
    RiskLevel.LOW: 0,
    RiskLevel.MEDIUM: 1,
    RiskLevel.HIGH: 2,
    RiskLevel.UNKNOWN: 2,  # ungraded gates as severely as high
}


def risk_rank(risk: RiskLevel) -> int:
    return _RANK[risk]


def parse_risk(value: Any) -> RiskLevel:
    """Lenient parse of a model-supplied risk string; garbage is UNKNOWN."""
    if isinstance(value, RiskLevel):
        return value
    if isinstance(value, str):
        try:
            return RiskLevel(value.strip().lower())
        except ValueError:
            return RiskLevel.UNKNOWN
    return RiskLevel.UNKNOWN


class NeverConfirm(BaseModel):
    """Execute everything immediately."""

    model_config = ConfigDict(frozen=True, extra="forbid")
    policy: Literal["never"] = "never"


class AlwaysConfirm(BaseModel):
    """Hold every action for a human decision."""

    model_config = ConfigDict(frozen=True, extra="forbid")
    policy: Literal["always"] = "always"


class ConfirmRisky(BaseModel):
    """Hold actions at or above ``threshold``; the rest run immediately."""

    model_config = ConfigDict(frozen=True, extra="forbid")
    policy: Literal["confirm_risky"] = "confirm_risky"
    threshold: RiskLevel = RiskLevel.HIGH


ConfirmationPolicy = Annotated[
    Union[NeverConfirm, AlwaysConfirm, ConfirmRisky],
    Field(discriminator="policy"),
]

POLICY_KINDS = {"never": NeverConfirm, "always": AlwaysConfirm, "confirm_risky": ConfirmRisky}


def requires_confirmation(
    policy: NeverConfirm | AlwaysConfirm | ConfirmRisky, risk: RiskLevel
) -> bool:
    if isinstance(policy, NeverConfirm):
        return False
    if isinstance(policy, AlwaysConfirm):
        return True
    return risk_rank(risk) >= risk_rank(policy.threshold)


# --------------------------------------------------------------------------
# Analyzers
#
# An analyzer grades an action draft before the gate.  "llm" trusts the
# model's own self-assessment: when active, every tool schema gains an
# optional security_risk parameter and the value the model supplies is read
# back here.  "rules" is a small static fallback that needs no model help.

AnalyzerKind = Literal["llm", "rules"]

RISK_PARAM = "security_risk"

RISK_PROPERTY = {
    "type": "string",
    "enum": [r.value for r in RiskLevel],
    "description": (
        "Your assessment of how much damage this action could do if wrong: "
        "low (read-only or trivially reversible), medium (modifies state "
        "but recoverable), high (destructive, external, or hard to undo)."
    ),
}

_READ_ONLY_COMMANDS = frozenset(
    {
        "ls", "cat", "head", "tail", "pwd", "echo", "grep", "find", "wc",
        "which", "whoami", "env", "date", "stat", "file", "du", "df",
        "sort", "uniq", "diff", "printf", "true", "uname",
    }
)


def augment_schema_with_risk(schema: Mapping[str, Any]) -> dict:
    """Copy of a tool parameter schema with the risk field added."""
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in schema.items()}
    properties = dict(out.get("properties") or {})
    properties[RISK_PARAM] = dict(RISK_PROPERTY)
    out["properties"] = properties
    return out


def _rules_grade(tool_name: str, arguments: Mapping[str, Any]) -> RiskLevel:
    if tool_name == "finish":
        return RiskLevel.LOW
    if tool_name == "bash":
        command = arguments.get("command", "")
        if not isinstance(command, str) or not command.strip():
            return RiskLevel.UNKNOWN
        try:
            tokens = shlex.split(command)
        except ValueError:
            return RiskLevel.UNKNOWN
        if tokens and tokens[0] in _READ_ONLY_COMMANDS and not any(
            t in {">", ">>", "|", ";", "&&", "||"} for t in tokens
        ):
            return RiskLevel.LOW
        return RiskLevel.UNKNOWN
    if tool_name == "file" and arguments.get("op") == "read":
        return RiskLevel.LOW
    return RiskLevel.UNKNOWN


def analyze_action(
    analyzer: AnalyzerKind | None,
    tool_name: str,
    arguments: Mapping[str, Any],
) -> RiskLevel:
    """Grade an action draft.  With no analyzer the grade is UNKNOWN."""
    if analyzer == "llm":
        return parse_risk(arguments.get(RISK_PARAM))
    if analyzer == "rules":
        return _rules_grade(tool_name, arguments)
    return RiskLevel.UNKNOWN
