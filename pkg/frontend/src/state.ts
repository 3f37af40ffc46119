// Console session state and the rules for changing it.
//
// The invariant, and the reason this module has no I/O: everything shown for
// a conversation is a pure function of the frames received so far plus the
// last REST error. Button handlers fire requests and report failures; they
// never flip status locally. Status changes arrive as state_update frames or
// not at all.

import type { AgentEvent, AgentStatus, Frame } from "./types.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface SessionState {
  frames: Frame[];
  status: AgentStatus;
  title: string | null;
  connection: ConnectionStatus;
  lastError: string | null;
}

export function initialState(): SessionState {
  return {
    frames: [],
    status: "idle",
    title: null,
    connection: "connecting",
    lastError: null,
  };
}

/**
 * Fold one accepted frame in. The stream client already guarantees density,
 * so this trusts `frame` and only derives: status and title track
 * state_update events, nothing else mutates them.
 */
export function applyFrame(state: SessionState, frame: Frame): SessionState {
  const next: SessionState = { ...state, frames: [...state.frames, frame] };
  const event = frame.event;
  if (event.kind === "state_update") {
    if (event.field === "agent_status") {
      next.status = event.value as AgentStatus;
    } else if (event.field === "title") {
      next.title = event.value as string | null;
    }
  }
  return next;
}

export function connectionChanged(
  state: SessionState,
  connection: ConnectionStatus,
): SessionState {
  return { ...state, connection };
}

export function errored(state: SessionState, message: string | null): SessionState {
  return { ...state, lastError: message };
}

export interface Controls {
  send: boolean;
  run: boolean;
  pause: boolean;
  approve: boolean;
  reject: boolean;
}

/**
 * What the control bar may offer, derived from state alone.
 *
 * Disconnected means everything is off: with no stream there is no truth to
 * act on. Approve and reject are tied to waiting_for_confirmation exactly;
 * run is for the statuses where starting a loop makes sense; pause only
 * while one is running.
 */
export function controlsFor(state: SessionState): Controls {
  if (state.connection !== "open") {
    return { send: false, run: false, pause: false, approve: false, reject: false };
  }
  const status = state.status;
  const waiting = status === "waiting_for_confirmation";
  return {
    send: true,
    run: !waiting && status !== "running",
    pause: status === "running",
    approve: waiting,
    reject: waiting,
  };
}

/** Events in log order, for renderers that do not care about indices. */
export function eventsOf(state: SessionState): AgentEvent[] {
  return state.frames.map((frame) => frame.event);
}
