import type { TurnRequest } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type Fetch = typeof fetch;

/** Thin wrapper over the session API; bodies are returned unvalidated. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: Fetch = fetch,
  ) {}

  private async call(method: string, path: string, body?: unknown): Promise<unknown> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const res = await this.fetchImpl(this.baseUrl.replace(/\/$/, "") + path, init);
    const text = await res.text();
    let parsed: unknown = null;
    try {
      parsed = text === "" ? null : JSON.parse(text);
    } catch {
      if (res.ok) throw new ApiError(res.status, "bad_json", "response is not JSON");
    }
    if (!res.ok) {
      const err = (parsed as { error?: { kind?: string; message?: string } } | null)?.error;
      throw new ApiError(res.status, err?.kind ?? "http", err?.message ?? `HTTP ${res.status}`);
    }
    return parsed;
  }

  async createSession(config: Record<string, unknown> = {}): Promise<string> {
    const body = (await this.call("POST", "/sessions", config)) as { id?: unknown } | null;
    if (typeof body?.id !== "string") throw new ApiError(200, "bad_json", "session response has no id");
    return body.id;
  }

  postTurn(id: string, req: TurnRequest): Promise<unknown> {
    return this.call("POST", `/sessions/${encodeURIComponent(id)}/turns`, req);
  }

  history(id: string): Promise<unknown> {
    return this.call("GET", `/sessions/${encodeURIComponent(id)}/history`);
  }
}
