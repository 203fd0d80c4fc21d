/** Thin typed client for the survey service's /v1 endpoints. */

import type { ApiErrorBody, OccurrencePayload, SessionBody } from "./types.js";

export class ApiRequestError extends Error {
  readonly status: number;
  readonly code: string;
  readonly body: ApiErrorBody | null;

  constructor(status: number, body: ApiErrorBody | null, fallback: string) {
    super(body?.message ?? fallback);
    this.status = status;
    this.code = body?.code ?? "HTTP_ERROR";
    this.body = body;
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  assetUrl(imageTitle: string): string {
    return `${this.base}/assets/${encodeURIComponent(imageTitle)}`;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(`${this.base}${path}`, init);
    const text = await response.text();
    if (!response.ok) {
      let parsed: ApiErrorBody | null = null;
      try {
        parsed = JSON.parse(text) as ApiErrorBody;
      } catch {
        // non-JSON error body; keep the fallback message
      }
      throw new ApiRequestError(response.status, parsed, `${method} ${path} -> ${response.status}`);
    }
    return (text ? JSON.parse(text) : null) as T;
  }

  getDue(participantId: string): Promise<OccurrencePayload[]> {
    return this.request("GET", `/v1/participants/${encodeURIComponent(participantId)}/due`);
  }

  createSession(participantId: string, occurrenceId: string): Promise<SessionBody> {
    const pid = encodeURIComponent(participantId);
    const oid = encodeURIComponent(occurrenceId);
    return this.request("POST", `/v1/participants/${pid}/occurrences/${oid}/sessions`);
  }

  getStep(sessionId: string): Promise<SessionBody> {
    return this.request("GET", `/v1/sessions/${encodeURIComponent(sessionId)}/step`);
  }

  postAnswer(sessionId: string, answer: string | string[] | null): Promise<SessionBody> {
    return this.request("POST", `/v1/sessions/${encodeURIComponent(sessionId)}/answers`, { answer });
  }

  goBack(sessionId: string): Promise<SessionBody> {
    return this.request("POST", `/v1/sessions/${encodeURIComponent(sessionId)}/answers`, { back: true });
  }

  completeAck(sessionId: string): Promise<SessionBody> {
    return this.request("POST", `/v1/sessions/${encodeURIComponent(sessionId)}/complete-ack`);
  }

  snooze(occurrenceId: string): Promise<OccurrencePayload> {
    return this.request("POST", `/v1/occurrences/${encodeURIComponent(occurrenceId)}/snooze`);
  }

  advanceClock(seconds: number): Promise<{ mode: string; now: string }> {
    return this.request("POST", "/v1/_clock/advance", { seconds });
  }
}
