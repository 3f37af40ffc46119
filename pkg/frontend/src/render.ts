// DOM renderers for the transcript. One element per event, one branch per
// kind, so every kind is visually distinct and testable by class name.

import type { AgentEvent, ContentPart } from "./types.js";

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function contentNodes(parts: ContentPart[]): HTMLElement[] {
  return parts.map((part) => {
    if (part.type === "image") {
      const img = el("img", "content-image") as HTMLImageElement;
      img.src = part.url;
      img.alt = "image attachment";
      return img;
    }
    return el("p", "content-text", part.text);
  });
}

function header(event: AgentEvent, label: string): HTMLElement {
  const head = el("div", "event-head");
  head.appendChild(el("span", "event-label", label));
  head.appendChild(el("span", "event-source", event.source));
  const time = event.timestamp.replace("T", " ").replace(/\.\d+Z?$/, "");
  head.appendChild(el("span", "event-time", time));
  return head;
}

/** Render one event. The returned element carries `data-kind` and an
 * `event-<kind>` class (dots in class names would break selectors, so the
 * kind goes in verbatim: event-message, event-action, ...). */
export function renderEvent(event: AgentEvent): HTMLElement {
  const root = el("article", `event event-${event.kind}`);
  root.dataset.kind = event.kind;
  root.dataset.eventId = event.id;

  switch (event.kind) {
    case "message": {
      root.classList.add(event.role === "user" ? "from-user" : "from-assistant");
      root.appendChild(header(event, event.role));
      const body = el("div", "event-body");
      for (const node of contentNodes(event.content)) body.appendChild(node);
      root.appendChild(body);
      break;
    }
    case "system_prompt": {
      root.appendChild(header(event, "system prompt"));
      const details = el("details", "event-body");
      details.appendChild(el("summary", "fold-summary", "prompt and tool declarations"));
      details.appendChild(el("pre", "prompt-text", event.prompt));
      details.appendChild(
        el("pre", "tool-declarations", JSON.stringify(event.tools, null, 2)),
      );
      root.appendChild(details);
      break;
    }
    case "action": {
      root.appendChild(header(event, `action ${event.tool_name}`));
      const badge = el("span", `risk-badge risk-${event.security_risk}`, event.security_risk);
      root.appendChild(badge);
      if (event.thought) root.appendChild(el("p", "action-thought", event.thought));
      root.appendChild(
        el("pre", "action-arguments", JSON.stringify(event.arguments, null, 2)),
      );
      root.appendChild(el("span", "call-id", event.tool_call_id));
      break;
    }
    case "observation": {
      root.appendChild(header(event, `observation ${event.tool_name}`));
      if (event.is_error) root.classList.add("is-error");
      root.appendChild(el("pre", "observation-output", event.llm_text));
      root.appendChild(el("span", "call-id", event.tool_call_id));
      break;
    }
    case "user_reject": {
      root.appendChild(header(event, `rejected ${event.tool_name}`));
      const note = event.note ? `Rejected: ${event.note}` : "Rejected by the user.";
      root.appendChild(el("p", "reject-note", note));
      root.appendChild(el("span", "call-id", event.tool_call_id));
      break;
    }
    case "agent_error": {
      root.appendChild(header(event, "error"));
      root.appendChild(el("p", "error-text", event.error));
      break;
    }
    case "condensation_summary": {
      root.appendChild(header(event, "summary"));
      root.appendChild(el("p", "summary-text", event.summary));
      break;
    }
    case "condensation": {
      root.appendChild(header(event, "condensed"));
      const count = event.forgotten_event_ids.length;
      root.appendChild(
        el("p", "condensation-note", `${count} earlier events folded into a summary.`),
      );
      if (event.summary) root.appendChild(el("p", "summary-text", event.summary));
      break;
    }
    case "condensation_request": {
      root.appendChild(header(event, "condensation requested"));
      break;
    }
    case "state_update": {
      root.appendChild(header(event, "state"));
      root.appendChild(
        el("p", "state-change", `${event.field} = ${JSON.stringify(event.value)}`),
      );
      break;
    }
    case "pause": {
      root.appendChild(header(event, "paused"));
      root.appendChild(el("p", "pause-note", "Run paused at a step boundary."));
      break;
    }
  }
  return root;
}

export function statusChip(status: string): HTMLElement {
  return el("span", `status-chip status-${status}`, status.replace(/_/g, " "));
}
