import { ApiClient, ApiError } from "./client.js";
import { type Action, type ChatViewState, initialState, reduce } from "./state.js";
import { MalformedPayload, parseHistory, parsePipelineOutput } from "./types.js";

export type Listener = (state: ChatViewState) => void;

/**
 * Owns the view state and talks to the server. At most one turn is in
 * flight; sends made meanwhile are dropped rather than queued.
 */
export class ChatController {
  private current: ChatViewState = initialState();
  private listeners: Listener[] = [];
  private busy = false;

  constructor(private readonly client: ApiClient) {}

  get state(): ChatViewState {
    return this.current;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private dispatch(action: Action): void {
    this.current = reduce(this.current, action);
    for (const l of this.listeners) l(this.current);
  }

  async open(config: Record<string, unknown> = {}): Promise<void> {
    try {
      this.dispatch({ type: "session_opened", id: await this.client.createSession(config) });
    } catch (e) {
      this.dispatch({ type: "connection", connection: "offline" });
      throw e;
    }
  }

  /** Resolves to false when the send was refused. */
  async send(utterance: string): Promise<boolean> {
    const text = utterance.trim();
    const id = this.current.sessionId;
    if (this.busy || text === "" || id === null) return false;
    this.busy = true;
    try {
      this.dispatch({ type: "send_started", utterance: text });
      let raw: unknown;
      try {
        raw = await this.client.postTurn(id, { utterance: text });
      } catch (e) {
        this.dispatch({ type: "send_failed", message: describe(e) });
        if (!(e instanceof ApiError)) this.dispatch({ type: "connection", connection: "offline" });
        await this.sync();
        return true;
      }
      try {
        this.dispatch({ type: "send_succeeded", output: parsePipelineOutput(raw) });
      } catch (e) {
        if (!(e instanceof MalformedPayload)) throw e;
        this.dispatch({ type: "payload_malformed", message: `Malformed reply: ${e.message}` });
      }
      await this.sync();
      return true;
    } finally {
      this.busy = false;
    }
  }

  /** Resend the utterance of the last failed turn. */
  async retry(): Promise<boolean> {
    const pending = this.current.banner?.kind === "retry" ? this.current.pending : null;
    return pending === null ? false : this.send(pending);
  }

  dismissBanner(): void {
    this.dispatch({ type: "banner_dismissed" });
  }

  async sync(): Promise<void> {
    const id = this.current.sessionId;
    if (id === null) return;
    try {
      this.dispatch({ type: "history_synced", entries: parseHistory(await this.client.history(id)) });
    } catch {
      this.dispatch({ type: "connection", connection: "offline" });
    }
  }
}

function describe(e: unknown): string {
  if (e instanceof ApiError) return `Server error (${e.status}): ${e.message}`;
  return "Could not reach the server";
}
