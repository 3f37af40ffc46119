// Wire types for the agentrt server. These mirror docs/server-api.md and
// docs/event-format.md; the console never invents fields of its own.

export type AgentStatus =
  | "idle"
  | "running"
  | "paused"
  | "waiting_for_confirmation"
  | "finished"
  | "stuck"
  | "error";

export type SecurityRisk = "low" | "medium" | "high" | "unknown";

export type ContentPart =
  | { type: "text"; text: string }
  | { type: "image"; url: string };

interface EventBase {
  id: string;
  timestamp: string;
  source: string;
}

export interface MessageEvent extends EventBase {
  kind: "message";
  role: "user" | "assistant";
  content: ContentPart[];
}

export interface SystemPromptEvent extends EventBase {
  kind: "system_prompt";
  prompt: string;
  tools: unknown[];
}

export interface ActionEvent extends EventBase {
  kind: "action";
  tool_name: string;
  tool_call_id: string;
  arguments: Record<string, unknown>;
  thought: string;
  security_risk: SecurityRisk;
}

export interface ObservationEvent extends EventBase {
  kind: "observation";
  tool_call_id: string;
  tool_name: string;
  result: unknown;
  is_error: boolean;
  llm_text: string;
}

export interface UserRejectEvent extends EventBase {
  kind: "user_reject";
  tool_call_id: string;
  tool_name: string;
  note: string | null;
}

export interface AgentErrorEvent extends EventBase {
  kind: "agent_error";
  error: string;
  tool_call_id: string | null;
}

export interface CondensationSummaryEvent extends EventBase {
  kind: "condensation_summary";
  summary: string;
}

export interface CondensationEvent extends EventBase {
  kind: "condensation";
  forgotten_event_ids: string[];
  summary: string | null;
  anchor_id: string | null;
}

export interface CondensationRequestEvent extends EventBase {
  kind: "condensation_request";
}

export interface StateUpdateEvent extends EventBase {
  kind: "state_update";
  field: string;
  value: unknown;
}

export interface PauseEvent extends EventBase {
  kind: "pause";
}

export type AgentEvent =
  | MessageEvent
  | SystemPromptEvent
  | ActionEvent
  | ObservationEvent
  | UserRejectEvent
  | AgentErrorEvent
  | CondensationSummaryEvent
  | CondensationEvent
  | CondensationRequestEvent
  | StateUpdateEvent
  | PauseEvent;

export type EventKind = AgentEvent["kind"];

/** One WebSocket frame: the event plus its position in the log. */
export interface Frame {
  index: number;
  event: AgentEvent;
}

/** Record shape returned by the conversation routes. */
export interface ConversationRecord {
  id: string;
  status: AgentStatus;
  title: string | null;
  created_at: string;
  event_count: number;
  workspace_dir: string;
}

export type ConfirmationPolicy =
  | { policy: "never" }
  | { policy: "always" }
  | { policy: "confirm_risky"; threshold: SecurityRisk };
