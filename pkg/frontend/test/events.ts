// Builders for wire-shaped events with stable fake ids, so tests read as
// scripts rather than JSON walls.

import type {
  ActionEvent,
  AgentErrorEvent,
  AgentEvent,
  AgentStatus,
  CondensationEvent,
  CondensationRequestEvent,
  CondensationSummaryEvent,
  MessageEvent,
  ObservationEvent,
  PauseEvent,
  SecurityRisk,
  StateUpdateEvent,
  SystemPromptEvent,
  UserRejectEvent,
} from "../src/types.js";

let counter = 0;

export function resetIds(): void {
  counter = 0;
}

function nextId(): string {
  counter += 1;
  return "01JVN" + "0".repeat(17) + String(counter).padStart(4, "0");
}

const TIMESTAMP = "2025-03-14T09:26:53.100000Z";

function base(source: string): { id: string; timestamp: string; source: string } {
  return { id: nextId(), timestamp: TIMESTAMP, source };
}

export function message(role: "user" | "assistant", text: string): MessageEvent {
  return {
    ...base(role === "user" ? "user" : "agent"),
    kind: "message",
    role,
    content: [{ type: "text", text }],
  };
}

export function imageMessage(url: string): MessageEvent {
  return {
    ...base("user"),
    kind: "message",
    role: "user",
    content: [
      { type: "text", text: "See the screenshot." },
      { type: "image", url },
    ],
  };
}

export function systemPrompt(): SystemPromptEvent {
  return {
    ...base("system"),
    kind: "system_prompt",
    prompt: "You are a software agent working in a sandboxed workspace.",
    tools: [],
  };
}

export function action(
  risk: SecurityRisk = "low",
  command = "pytest -x -q",
): ActionEvent {
  return {
    ...base("agent"),
    kind: "action",
    tool_name: "bash",
    tool_call_id: `call_${String(counter + 1).padStart(4, "0")}`,
    arguments: { command },
    thought: "Run it and see.",
    security_risk: risk,
  };
}

export function observation(text: string, callId = "call_0001"): ObservationEvent {
  return {
    ...base("environment"),
    kind: "observation",
    tool_call_id: callId,
    tool_name: "bash",
    result: { exit_code: 0, stdout: text, stderr: "", duration_ms: 10 },
    is_error: false,
    llm_text: text,
  };
}

export function userReject(note: string | null = null): UserRejectEvent {
  return {
    ...base("user"),
    kind: "user_reject",
    tool_call_id: "call_0002",
    tool_name: "bash",
    note,
  };
}

export function agentError(text = "tool 'browser' is not registered"): AgentErrorEvent {
  return {
    ...base("environment"),
    kind: "agent_error",
    error: text,
    tool_call_id: null,
  };
}

export function condensationSummary(text: string): CondensationSummaryEvent {
  return { ...base("system"), kind: "condensation_summary", summary: text };
}

export function condensation(ids: string[]): CondensationEvent {
  return {
    ...base("system"),
    kind: "condensation",
    forgotten_event_ids: ids,
    summary: "Earlier exploration, condensed.",
    anchor_id: ids[0] ?? null,
  };
}

export function condensationRequest(): CondensationRequestEvent {
  return { ...base("system"), kind: "condensation_request" };
}

export function statusUpdate(status: AgentStatus): StateUpdateEvent {
  return {
    ...base("system"),
    kind: "state_update",
    field: "agent_status",
    value: status,
  };
}

export function titleUpdate(title: string): StateUpdateEvent {
  return { ...base("system"), kind: "state_update", field: "title", value: title };
}

export function pause(): PauseEvent {
  return { ...base("user"), kind: "pause" };
}

/** One event of every kind, in a plausible transcript order. */
export function oneOfEachKind(): AgentEvent[] {
  return [
    systemPrompt(),
    message("user", "Find the failing test and fix it."),
    statusUpdate("running"),
    action("low"),
    observation("1 failed, 12 passed\n"),
    condensationRequest(),
    condensation(["01JVN000000000000000000004"]),
    condensationSummary("The agent located the failing test."),
    userReject("Do not push to the remote."),
    agentError(),
    message("assistant", "The timeout default is wrong."),
    pause(),
  ];
}
