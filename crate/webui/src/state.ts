import type { HistoryEntry, PipelineOutput, ScoreMap } from "./types.js";

export const TOP_K = 3;

export type Stage = "user_emotion" | "strategy" | "system_emotion";
export const STAGES: readonly Stage[] = ["user_emotion", "strategy", "system_emotion"];

export interface RankedScores {
  top: Array<[string, number]>;
  /** Lower-ranked labels, hidden behind a toggle. */
  rest: Array<[string, number]>;
}

export interface StagePanel {
  user_emotion: string | null;
  strategy: string | null;
  system_emotion: string | null;
  /** Absent for stages the pipeline skipped or for turns replayed from history. */
  scores: Partial<Record<Stage, RankedScores>>;
  cue: string | null;
  truncated: boolean;
}

export type Message =
  | { role: "user"; text: string; index: number | null }
  | { role: "assistant"; text: string; index: number | null; panel: StagePanel };

export type Connection = "closed" | "open" | "offline";

export interface Banner {
  kind: "retry" | "error";
  message: string;
}

export interface ChatViewState {
  sessionId: string | null;
  messages: Message[];
  connection: Connection;
  inFlight: boolean;
  banner: Banner | null;
  /** Utterance to resend from the retry banner. */
  pending: string | null;
  /** Full outputs keyed by the history index of their response entry. */
  outputs: Record<number, PipelineOutput>;
}

export type Action =
  | { type: "session_opened"; id: string }
  | { type: "connection"; connection: Connection }
  | { type: "send_started"; utterance: string }
  | { type: "send_succeeded"; output: PipelineOutput }
  | { type: "send_failed"; message: string }
  | { type: "payload_malformed"; message: string }
  | { type: "history_synced"; entries: HistoryEntry[] }
  | { type: "banner_dismissed" };

export function initialState(): ChatViewState {
  return { sessionId: null, messages: [], connection: "closed", inFlight: false, banner: null, pending: null, outputs: {} };
}

export function rankScores(map: ScoreMap, k = TOP_K): RankedScores {
  const sorted = Object.entries(map).sort((a, b) => b[1] - a[1] || (a[0] < b[0] ? -1 : a[0] > b[0] ? 1 : 0));
  return { top: sorted.slice(0, k), rest: sorted.slice(k) };
}

export function panelFor(output: PipelineOutput, cue: string | null = null): StagePanel {
  const scores: Partial<Record<Stage, RankedScores>> = {};
  for (const stage of STAGES) {
    const m = output.stage_scores[stage];
    if (m) scores[stage] = rankScores(m);
  }
  return {
    user_emotion: output.user_emotion,
    strategy: output.strategy,
    system_emotion: output.system_emotion,
    scores,
    cue,
    truncated: output.truncated,
  };
}

function lastIndex(messages: Message[]): number {
  return messages.reduce((m, msg) => (msg.index !== null && msg.index > m ? msg.index : m), 0);
}

function dropOptimistic(messages: Message[]): Message[] {
  return messages.filter((m) => m.index !== null);
}

// Rebuild the thread from server history. Stage scores survive from the
// outputs seen in this tab; older turns show the labels history kept.
function fromHistory(entries: HistoryEntry[], outputs: Record<number, PipelineOutput>): Message[] {
  const messages: Message[] = [];
  let cue: string | null = null;
  for (const e of entries) {
    if (e.type === "context") {
      cue = e.context.cue.text === "" ? null : e.context.cue.text;
      messages.push({ role: "user", text: e.context.utterance, index: e.index });
      continue;
    }
    const out = outputs[e.index];
    const panel: StagePanel = out
      ? panelFor(out, cue)
      : {
          user_emotion: null,
          strategy: e.record.strategy ?? null,
          system_emotion: e.record.emotion ?? null,
          scores: {},
          cue,
          truncated: false,
        };
    messages.push({ role: "assistant", text: e.record.text, index: e.index, panel });
    cue = null;
  }
  return messages;
}

export function reduce(state: ChatViewState, action: Action): ChatViewState {
  switch (action.type) {
    case "session_opened":
      return { ...initialState(), sessionId: action.id, connection: "open" };
    case "connection":
      return { ...state, connection: action.connection };
    case "send_started":
      if (state.inFlight || state.sessionId === null) return state;
      return {
        ...state,
        inFlight: true,
        banner: null,
        pending: action.utterance,
        messages: [...dropOptimistic(state.messages), { role: "user", text: action.utterance, index: null }],
      };
    case "send_succeeded": {
      // The new context takes the next index and its response the one after.
      const responseIndex = lastIndex(state.messages) + 2;
      return {
        ...state,
        inFlight: false,
        pending: null,
        connection: "open",
        outputs: { ...state.outputs, [responseIndex]: action.output },
        messages: [...state.messages, { role: "assistant", text: action.output.response, index: null, panel: panelFor(action.output) }],
      };
    }
    case "send_failed":
      return {
        ...state,
        inFlight: false,
        messages: dropOptimistic(state.messages),
        banner: { kind: "retry", message: action.message },
      };
    case "payload_malformed":
      return { ...state, inFlight: false, pending: null, banner: { kind: "error", message: action.message } };
    case "history_synced":
      return { ...state, messages: fromHistory(action.entries, state.outputs) };
    case "banner_dismissed":
      return { ...state, banner: null, pending: state.banner?.kind === "retry" ? null : state.pending };
  }
}
