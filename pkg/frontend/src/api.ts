// Thin REST client. Every call carries the bearer key; every non-2xx
// response becomes an ApiError with the server's detail string, which the
// app surfaces in the error banner.

import type {
  AgentStatus,
  ConfirmationPolicy,
  ContentPart,
  ConversationRecord,
  Frame,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
    this.status = status;
  }
}

async function errorFrom(response: Response): Promise<ApiError> {
  let detail = `${response.status} ${response.statusText}`.trim();
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // keep the status-line fallback
  }
  return new ApiError(response.status, detail);
}

export class ApiClient {
  readonly baseUrl: string;
  readonly apiKey: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, apiKey: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.apiKey = apiKey;
    this.fetchImpl = fetchImpl ?? ((url, init) => globalThis.fetch(url, init));
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.apiKey}`,
    };
    const init: RequestInit = { method, headers };
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) throw await errorFrom(response);
    if (response.status === 204) return undefined as T;
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("GET", "/health");
  }

  async listConversations(): Promise<ConversationRecord[]> {
    const body = await this.request<{ conversations: ConversationRecord[] }>(
      "GET",
      "/conversations",
    );
    return body.conversations;
  }

  createConversation(body: {
    agent: unknown;
    confirmation_policy?: ConfirmationPolicy;
    secrets?: Record<string, string>;
  }): Promise<ConversationRecord> {
    return this.request("POST", "/conversations", body);
  }

  getConversation(id: string): Promise<ConversationRecord> {
    return this.request("GET", `/conversations/${id}`);
  }

  events(id: string, since = 0): Promise<{ events: Frame[]; status: AgentStatus }> {
    return this.request("GET", `/conversations/${id}/events?since=${since}`);
  }

  sendMessage(id: string, content: string | ContentPart[]): Promise<{ accepted: boolean }> {
    return this.request("POST", `/conversations/${id}/messages`, { content });
  }

  run(id: string, maxSteps?: number): Promise<{ status: string }> {
    const body = maxSteps === undefined ? {} : { max_steps: maxSteps };
    return this.request("POST", `/conversations/${id}/run`, body);
  }

  pause(id: string): Promise<{ status: string }> {
    return this.request("POST", `/conversations/${id}/pause`);
  }

  confirm(id: string, decision: "approve" | "reject", note?: string): Promise<{ status: AgentStatus }> {
    const body: Record<string, string> = { decision };
    if (note !== undefined) body.note = note;
    return this.request("POST", `/conversations/${id}/confirmation`, body);
  }

  patchSecrets(id: string, secrets: Record<string, string>): Promise<void> {
    return this.request("PATCH", `/conversations/${id}/secrets`, secrets);
  }

  patchConfirmationPolicy(id: string, policy: ConfirmationPolicy): Promise<void> {
    return this.request("PATCH", `/conversations/${id}/confirmation_policy`, policy);
  }

  /** ws:// or wss:// URL for a conversation's event stream. */
  streamUrl(id: string, since: number): string {
    const ws = this.baseUrl.replace(/^http/, "ws");
    const key = encodeURIComponent(this.apiKey);
    return `${ws}/conversations/${id}/events?api_key=${key}&since=${since}`;
  }
}
