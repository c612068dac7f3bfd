// Thin typed client over fetch. Every method returns parsed JSON or throws
// ApiError with the HTTP status and decoded body, so the controller can see
// out-of-field responses (422 with a refreshed directive embedded).

import type { DirectivePayload, Fix, ReadingValues, SessionState } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  status: number;
  body: any;

  constructor(status: number, body: any) {
    super(`HTTP ${status}: ${body && body.error ? body.error : "request failed"}`);
    this.status = status;
    this.body = body;
  }

  get directive(): DirectivePayload | null {
    return this.body && this.body.directive ? (this.body.directive as DirectivePayload) : null;
  }
}

export function newToken(): string {
  if (typeof crypto !== "undefined" && typeof crypto.randomUUID === "function") {
    return crypto.randomUUID();
  }
  return `tok-${Date.now().toString(36)}-${Math.random().toString(36).slice(2, 10)}`;
}

export class SessionApi {
  private base: string;
  private fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, "");
    // bind: browsers reject fetch called with a bare function reference
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "Content-Type": "application/json" } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const resp = await this.fetchFn(`${this.base}${path}`, init);
    let decoded: any = null;
    try {
      decoded = await resp.json();
    } catch {
      decoded = null;
    }
    if (!resp.ok) throw new ApiError(resp.status, decoded);
    return decoded as T;
  }

  createSession(config: Record<string, unknown>): Promise<{ session_id: string; join_url: string }> {
    return this.call("POST", "/api/sessions", config);
  }

  join(sessionId: string): Promise<{ agent_id: string; directive: DirectivePayload }> {
    return this.call("POST", `/api/sessions/${sessionId}/agents`);
  }

  async reportFix(sessionId: string, agentId: string, fix: Fix): Promise<DirectivePayload> {
    const out = await this.call<{ directive: DirectivePayload }>(
      "POST", `/api/sessions/${sessionId}/agents/${agentId}/fix`, fix,
    );
    return out.directive;
  }

  async submitReading(
    sessionId: string,
    agentId: string,
    fix: Fix,
    values: ReadingValues,
    token: string,
  ): Promise<DirectivePayload> {
    const out = await this.call<{ directive: DirectivePayload }>(
      "POST", `/api/sessions/${sessionId}/agents/${agentId}/reading`,
      { ...fix, ...values, token },
    );
    return out.directive;
  }

  getState(sessionId: string): Promise<SessionState> {
    return this.call("GET", `/api/sessions/${sessionId}/state`);
  }
}
