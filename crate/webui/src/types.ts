// Wire types of the session API and runtime checks for them.

export type ScoreMap = Record<string, number>;

export interface StageScores {
  user_emotion: ScoreMap | null;
  strategy: ScoreMap | null;
  system_emotion: ScoreMap | null;
}

export interface PipelineOutput {
  user_emotion: string | null;
  strategy: string | null;
  system_emotion: string | null;
  response: string;
  truncated: boolean;
  stage_scores: StageScores;
}

export interface EmotionCue {
  text: string;
  backend: string;
  turn_index: number;
}

export type HistoryEntry =
  | { type: "context"; index: number; context: { cue: EmotionCue; utterance: string; rendered: string } }
  | { type: "response"; index: number; record: { text: string; emotion?: string; strategy?: string } };

export interface ClipRef {
  media_id: string;
  start_s: number;
  end_s: number;
  kind: "video" | "audio";
}

export interface TurnRequest {
  utterance: string;
  clips?: ClipRef[];
}

export class MalformedPayload extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MalformedPayload";
  }
}

function isObject(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

function label(o: Record<string, unknown>, key: string): string | null {
  if (!(key in o)) throw new MalformedPayload(`missing field "${key}"`);
  const v = o[key];
  if (v === null || typeof v === "string") return v;
  throw new MalformedPayload(`field "${key}" must be a label or null`);
}

function scores(o: Record<string, unknown>, key: string): ScoreMap | null {
  const v = o[key];
  if (v === null || v === undefined) return null;
  if (!isObject(v)) throw new MalformedPayload(`scores "${key}" must be a map`);
  for (const [k, p] of Object.entries(v)) {
    if (typeof p !== "number" || !Number.isFinite(p)) throw new MalformedPayload(`score ${key}.${k} is not a number`);
  }
  return v as ScoreMap;
}

// A stage that is absent from the pipeline serializes as null; a missing
// key means the payload is not a pipeline output at all.
export function parsePipelineOutput(raw: unknown): PipelineOutput {
  if (!isObject(raw)) throw new MalformedPayload("expected an object");
  const response = raw["response"];
  if (typeof response !== "string") throw new MalformedPayload('missing field "response"');
  const s = raw["stage_scores"];
  if (!isObject(s)) throw new MalformedPayload('missing field "stage_scores"');
  return {
    user_emotion: label(raw, "user_emotion"),
    strategy: label(raw, "strategy"),
    system_emotion: label(raw, "system_emotion"),
    response,
    truncated: raw["truncated"] === true,
    stage_scores: {
      user_emotion: scores(s, "user_emotion"),
      strategy: scores(s, "strategy"),
      system_emotion: scores(s, "system_emotion"),
    },
  };
}

export function parseHistory(raw: unknown): HistoryEntry[] {
  if (!isObject(raw) || !Array.isArray(raw["entries"])) throw new MalformedPayload("expected {entries: [...]}");
  return raw["entries"].map((e, i) => {
    if (!isObject(e) || typeof e["index"] !== "number") throw new MalformedPayload(`entry ${i} has no index`);
    if (e["type"] === "context" && isObject(e["context"])) return e as unknown as HistoryEntry;
    if (e["type"] === "response" && isObject(e["record"])) return e as unknown as HistoryEntry;
    throw new MalformedPayload(`entry ${i} has unknown type`);
  });
}
