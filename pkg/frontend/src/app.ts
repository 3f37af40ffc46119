// Application wiring: three views (session form, conversation list, live
// transcript) over the REST and WebSocket contract in docs/server-api.md.
//
// Two rules shape everything here. Stream-is-truth: a conversation view is
// rendered only from frames received plus the last REST error, so button
// handlers never flip state locally, they fire a request and wait for the
// resulting frames. And controls degrade: on disconnect every button goes
// dark until the stream is back.

import { ApiClient, ApiError, type FetchLike } from "./api.js";
import { EventStream, type SocketLike } from "./stream.js";
import {
  applyFrame,
  connectionChanged,
  controlsFor,
  errored,
  initialState,
  type SessionState,
} from "./state.js";
import { renderEvent, statusChip } from "./render.js";
import type { ConfirmationPolicy, ConversationRecord, Frame } from "./types.js";

export interface ConsoleDeps {
  fetchImpl?: FetchLike;
  makeSocket?: (url: string) => SocketLike;
  reconnectDelayMs?: number;
}

const CREATE_TEMPLATE = {
  agent: {
    llm: { type: "llm", model: "gpt-4o-mini", credential_alias: "default" },
    tool_specs: [{ name: "bash" }, { name: "file" }, { name: "finish" }],
  },
};

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function button(id: string, label: string, onClick: () => void): HTMLButtonElement {
  const node = el("button", "control") as HTMLButtonElement;
  node.id = id;
  node.type = "button";
  node.textContent = label;
  node.addEventListener("click", onClick);
  return node;
}

export class ConsoleApp {
  private readonly root: HTMLElement;
  private readonly deps: ConsoleDeps;
  private api: ApiClient | null = null;
  private stream: EventStream | null = null;
  private state: SessionState = initialState();
  private renderedCount = 0;
  private banner: HTMLElement;
  private main: HTMLElement;

  constructor(root: HTMLElement, deps: ConsoleDeps = {}) {
    this.root = root;
    this.deps = deps;
    this.root.textContent = "";
    const shell = el("div", "console");
    const head = el("header", "console-head");
    head.appendChild(el("h1", "console-title", "agentrt console"));
    this.banner = el("div", "error-banner");
    this.banner.hidden = true;
    head.appendChild(this.banner);
    shell.appendChild(head);
    this.main = el("main", "console-main");
    shell.appendChild(this.main);
    this.root.appendChild(shell);
    this.showSessionForm();
  }

  destroy(): void {
    this.stopStream();
    this.root.textContent = "";
  }

  private setError(message: string | null): void {
    this.state = errored(this.state, message);
    this.banner.hidden = message === null;
    this.banner.textContent = message ?? "";
  }

  private async guard<T>(work: () => Promise<T>): Promise<T | undefined> {
    try {
      const result = await work();
      this.setError(null);
      return result;
    } catch (error) {
      const message =
        error instanceof ApiError
          ? `${error.status}: ${error.message}`
          : String(error);
      this.setError(message);
      return undefined;
    }
  }

  private stopStream(): void {
    if (this.stream) {
      this.stream.stop();
      this.stream = null;
    }
  }

  // ---- session form -----------------------------------------------------

  private showSessionForm(): void {
    this.stopStream();
    this.main.textContent = "";
    const form = el("section", "session-form");
    form.id = "session-form";

    const urlInput = el("input") as HTMLInputElement;
    urlInput.id = "server-url";
    urlInput.value =
      typeof location !== "undefined" && location.origin.startsWith("http")
        ? location.origin
        : "http://127.0.0.1:8000";

    const keyInput = el("input") as HTMLInputElement;
    keyInput.id = "api-key";
    keyInput.type = "password";
    keyInput.placeholder = "API key";

    const connect = button("connect-btn", "Connect", () => {
      void this.guard(async () => {
        const api = new ApiClient(urlInput.value, keyInput.value, this.deps.fetchImpl);
        await api.health();
        this.api = api;
        await this.showList();
      });
    });

    form.appendChild(labelled("Server URL", urlInput));
    form.appendChild(labelled("API key", keyInput));
    form.appendChild(connect);
    this.main.appendChild(form);
  }

  // ---- conversation list ------------------------------------------------

  private async showList(): Promise<void> {
    const api = this.api;
    if (!api) return;
    this.stopStream();
    const records = await api.listConversations();
    this.main.textContent = "";

    const section = el("section", "conversation-list");
    section.id = "conversation-list";
    section.appendChild(el("h2", "view-title", "Conversations"));

    if (records.length === 0) {
      section.appendChild(el("p", "empty-note", "No conversations yet."));
    } else {
      const table = el("table", "conversation-table");
      const head = el("tr");
      for (const name of ["id", "title", "status", "events", "created"]) {
        head.appendChild(el("th", "", name));
      }
      table.appendChild(head);
      for (const record of records) {
        table.appendChild(this.listRow(record));
      }
      section.appendChild(table);
    }

    const createForm = el("div", "create-form");
    createForm.id = "new-conversation";
    const config = el("textarea", "create-config") as HTMLTextAreaElement;
    config.id = "create-config";
    config.value = JSON.stringify(CREATE_TEMPLATE, null, 2);
    createForm.appendChild(labelled("New conversation", config));
    createForm.appendChild(
      button("create-btn", "Create", () => {
        void this.guard(async () => {
          const body = JSON.parse(config.value) as { agent: unknown };
          const record = await this.api!.createConversation(body);
          await this.openConversation(record.id);
        });
      }),
    );
    section.appendChild(createForm);

    section.appendChild(
      button("refresh-btn", "Refresh", () => {
        void this.guard(() => this.showList());
      }),
    );

    this.main.appendChild(section);
  }

  private listRow(record: ConversationRecord): HTMLElement {
    const row = el("tr", "conversation-row");
    row.dataset.conversationId = record.id;
    row.appendChild(el("td", "cell-id", record.id));
    row.appendChild(el("td", "cell-title", record.title ?? "(untitled)"));
    row.appendChild(el("td", "cell-status", record.status));
    row.appendChild(el("td", "cell-events", String(record.event_count)));
    row.appendChild(el("td", "cell-created", record.created_at));
    row.addEventListener("click", () => {
      void this.guard(() => this.openConversation(record.id));
    });
    return row;
  }

  // ---- live conversation view --------------------------------------------

  private async openConversation(id: string): Promise<void> {
    const api = this.api;
    if (!api) return;
    this.stopStream();
    this.state = initialState();
    this.renderedCount = 0;
    this.main.textContent = "";

    const view = el("section", "conversation-view");
    view.dataset.conversationId = id;

    const bar = el("div", "view-bar");
    bar.appendChild(
      button("back-btn", "Back", () => {
        void this.guard(() => this.showList());
      }),
    );
    bar.appendChild(el("span", "conversation-id", id));
    const status = el("span", "status-slot");
    status.id = "status-slot";
    bar.appendChild(status);
    const connection = el("span", "connection-indicator");
    connection.id = "connection-indicator";
    bar.appendChild(connection);
    view.appendChild(bar);

    const transcript = el("div", "transcript");
    transcript.id = "transcript";
    view.appendChild(transcript);

    view.appendChild(this.buildControls(id));
    view.appendChild(this.buildSettings(id));
    this.main.appendChild(view);

    const render = () => this.renderConversation(transcript, status, connection);
    render();

    const makeSocket =
      this.deps.makeSocket ?? ((url: string) => new WebSocket(url) as SocketLike);
    this.stream = new EventStream({
      connect: (since) => makeSocket(api.streamUrl(id, since)),
      onFrame: (frame: Frame) => {
        this.state = applyFrame(this.state, frame);
        render();
      },
      onConnection: (open) => {
        this.state = connectionChanged(this.state, open ? "open" : "closed");
        render();
      },
      reconnectDelayMs: this.deps.reconnectDelayMs,
    });
    this.stream.start();
  }

  private renderConversation(
    transcript: HTMLElement,
    statusSlot: HTMLElement,
    connection: HTMLElement,
  ): void {
    for (let i = this.renderedCount; i < this.state.frames.length; i += 1) {
      transcript.appendChild(renderEvent(this.state.frames[i]!.event));
    }
    this.renderedCount = this.state.frames.length;
    transcript.scrollTop = transcript.scrollHeight;

    statusSlot.textContent = "";
    statusSlot.appendChild(statusChip(this.state.status));
    const title = this.state.title;
    if (title) statusSlot.appendChild(el("span", "conversation-title", title));

    connection.textContent = this.state.connection;
    connection.className = `connection-indicator connection-${this.state.connection}`;

    const controls = controlsFor(this.state);
    setEnabled("send-btn", controls.send);
    setEnabled("message-input", controls.send);
    setEnabled("run-btn", controls.run);
    setEnabled("pause-btn", controls.pause);
    setEnabled("approve-btn", controls.approve);
    setEnabled("reject-btn", controls.reject);
    setEnabled("reject-note", controls.reject);
  }

  private buildControls(id: string): HTMLElement {
    const controls = el("div", "control-bar");
    controls.id = "controls";

    const message = el("textarea", "message-input") as HTMLTextAreaElement;
    message.id = "message-input";
    message.placeholder = "Message for the agent";
    controls.appendChild(message);

    controls.appendChild(
      button("send-btn", "Send", () => {
        const content = message.value;
        if (!content.trim()) return;
        void this.guard(async () => {
          await this.api!.sendMessage(id, content);
          message.value = "";
        });
      }),
    );
    controls.appendChild(
      button("run-btn", "Run", () => {
        void this.guard(() => this.api!.run(id));
      }),
    );
    controls.appendChild(
      button("pause-btn", "Pause", () => {
        void this.guard(() => this.api!.pause(id));
      }),
    );
    controls.appendChild(
      button("approve-btn", "Approve", () => {
        void this.guard(() => this.api!.confirm(id, "approve"));
      }),
    );

    const note = el("input", "reject-note") as HTMLInputElement;
    note.id = "reject-note";
    note.placeholder = "Reason (optional)";
    controls.appendChild(
      button("reject-btn", "Reject", () => {
        void this.guard(async () => {
          await this.api!.confirm(id, "reject", note.value || undefined);
          note.value = "";
        });
      }),
    );
    controls.appendChild(note);
    return controls;
  }

  private buildSettings(id: string): HTMLElement {
    const settings = el("div", "settings");

    // Write-only secret entry: the value field is a password input, cleared
    // on submit, and nothing the server holds is ever echoed back.
    const secrets = el("form", "secrets-form") as HTMLFormElement;
    secrets.id = "secrets-form";
    const name = el("input", "secret-name") as HTMLInputElement;
    name.id = "secret-name";
    name.placeholder = "SECRET_NAME";
    const value = el("input", "secret-value") as HTMLInputElement;
    value.id = "secret-value";
    value.type = "password";
    value.placeholder = "value";
    secrets.appendChild(labelled("Add secret", name));
    secrets.appendChild(value);
    secrets.appendChild(
      button("secrets-apply", "Save secret", () => {
        if (!name.value) return;
        void this.guard(async () => {
          await this.api!.patchSecrets(id, { [name.value]: value.value });
          name.value = "";
          value.value = "";
        });
      }),
    );
    settings.appendChild(secrets);

    const policy = el("form", "policy-form") as HTMLFormElement;
    policy.id = "policy-form";
    const select = el("select") as HTMLSelectElement;
    select.id = "policy-select";
    for (const option of ["never", "always", "confirm_risky"]) {
      const node = document.createElement("option");
      node.value = option;
      node.textContent = option;
      select.appendChild(node);
    }
    const threshold = el("select") as HTMLSelectElement;
    threshold.id = "policy-threshold";
    for (const option of ["low", "medium", "high"]) {
      const node = document.createElement("option");
      node.value = option;
      node.textContent = option;
      threshold.appendChild(node);
    }
    threshold.value = "high";
    policy.appendChild(labelled("Confirmation policy", select));
    policy.appendChild(threshold);
    policy.appendChild(
      button("policy-apply", "Apply policy", () => {
        void this.guard(() => {
          const body: ConfirmationPolicy =
            select.value === "confirm_risky"
              ? { policy: "confirm_risky", threshold: threshold.value as "low" | "medium" | "high" }
              : { policy: select.value as "never" | "always" };
          return this.api!.patchConfirmationPolicy(id, body);
        });
      }),
    );
    settings.appendChild(policy);
    return settings;
  }
}

function labelled(text: string, control: HTMLElement): HTMLElement {
  const wrap = el("label", "field");
  wrap.appendChild(el("span", "field-name", text));
  wrap.appendChild(control);
  return wrap;
}

function setEnabled(id: string, enabled: boolean): void {
  const node = document.getElementById(id) as
    | HTMLButtonElement
    | HTMLInputElement
    | HTMLTextAreaElement
    | null;
  if (node) node.disabled = !enabled;
}

export function mountConsole(root: HTMLElement, deps: ConsoleDeps = {}): ConsoleApp {
  return new ConsoleApp(root, deps);
}
