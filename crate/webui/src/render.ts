import { type ChatViewState, type Message, type RankedScores, STAGES, type Stage, type StagePanel } from "./state.js";

const STAGE_TITLES: Record<Stage, string> = {
  user_emotion: "User emotion",
  strategy: "Strategy",
  system_emotion: "System emotion",
};

export function escapeHtml(s: string): string {
  return s.replace(/[&<>"']/g, (c) => `&#${c.charCodeAt(0)};`);
}

function pct(p: number): string {
  return `${(p * 100).toFixed(1)}%`;
}

function scoreList(r: RankedScores): string {
  const row = ([l, p]: [string, number]) => `<li><span class="label">${escapeHtml(l)}</span> <span class="p">${pct(p)}</span></li>`;
  const top = `<ol class="top">${r.top.map(row).join("")}</ol>`;
  if (r.rest.length === 0) return top;
  return `${top}<details class="rest"><summary>${r.rest.length} more</summary><ol>${r.rest.map(row).join("")}</ol></details>`;
}

export function renderPanel(panel: StagePanel): string {
  const stages = STAGES.map((s) => {
    const value = panel[s];
    const scores = panel.scores[s];
    return `<div class="stage" data-stage="${s}"><h4>${STAGE_TITLES[s]}</h4><p class="value">${value === null ? "&mdash;" : escapeHtml(value)}</p>${scores ? scoreList(scores) : ""}</div>`;
  }).join("");
  const cue = `<div class="stage cue"><h4>Cue</h4><p>${panel.cue === null ? "&mdash;" : escapeHtml(panel.cue)}</p></div>`;
  return `<aside class="panel">${stages}${cue}${panel.truncated ? '<p class="note">Response truncated</p>' : ""}</aside>`;
}

export function renderMessage(m: Message): string {
  const pending = m.index === null ? " pending" : "";
  const body = `<p class="text">${escapeHtml(m.text)}</p>`;
  if (m.role === "user") return `<li class="msg user${pending}">${body}</li>`;
  return `<li class="msg assistant${pending}">${body}${renderPanel(m.panel)}</li>`;
}

export function renderBanner(state: ChatViewState): string {
  const b = state.banner;
  if (!b) return "";
  const action = b.kind === "retry" ? '<button data-action="retry">Retry</button>' : "";
  return `<div class="banner ${b.kind}" role="alert"><span>${escapeHtml(b.message)}</span>${action}<button data-action="dismiss">Dismiss</button></div>`;
}

export function renderThread(state: ChatViewState): string {
  return `<ol class="thread">${state.messages.map(renderMessage).join("")}</ol>`;
}
