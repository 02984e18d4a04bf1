import assert from "node:assert/strict";
import { afterEach, beforeEach, test } from "node:test";

import { ApiClient } from "../src/client.js";
import { ChatController } from "../src/controller.js";
import { parseHistory } from "../src/types.js";
import { type MockServer, scripted, startMock } from "./mock-server.js";

let server: MockServer;
let chat: ChatController;

beforeEach(async () => {
  server = await startMock((n) => scripted(n === 1 ? "Tell me more." : `Reply ${n}.`));
  chat = new ChatController(new ApiClient(server.url));
  await chat.open();
});

afterEach(() => server.close());

async function serverHistory(): Promise<unknown> {
  const res = await fetch(`${server.url}/sessions/${chat.state.sessionId}/history`);
  return parseHistory(await res.json());
}

function viewHistory(): Array<[string, string, number | null]> {
  return chat.state.messages.map((m) => [m.role, m.text, m.index]);
}

function expected(entries: unknown): Array<[string, string, number | null]> {
  return (entries as ReturnType<typeof parseHistory>).map((e) =>
    e.type === "context" ? ["user", e.context.utterance, e.index] : ["assistant", e.record.text, e.index],
  );
}

test("one send posts the utterance once", async () => {
  assert.equal(await chat.send("I can't sleep."), true);
  assert.deepEqual(server.turns, [{ id: "s1", body: { utterance: "I can't sleep." } }]);
  const last = chat.state.messages.at(-1)!;
  assert.equal(last.role, "assistant");
  assert.equal(last.text, "Tell me more.");
  assert.ok(last.role === "assistant" && last.panel.strategy === "open_questions");
  assert.ok(last.role === "assistant" && last.panel.cue === "[mock cue 1]");
});

test("double click sends exactly one request", async () => {
  server.delayMs = 30;
  const first = chat.send("hello");
  const second = chat.send("hello");
  assert.equal(chat.state.inFlight, true);
  assert.deepEqual(await Promise.all([first, second]), [true, false]);
  assert.equal(server.turns.length, 1);
});

test("server error shows retry and leaves history unchanged", async () => {
  await chat.send("first");
  const before = viewHistory();
  server.faults.push("http500");
  await chat.send("second");
  assert.equal(chat.state.banner?.kind, "retry");
  assert.deepEqual(viewHistory(), before);
  assert.deepEqual(viewHistory(), expected(await serverHistory()));

  assert.equal(await chat.retry(), true);
  assert.equal(chat.state.banner, null);
  assert.deepEqual(server.turns.map((t) => (t.body as { utterance: string }).utterance), ["first", "second", "second"]);
  assert.equal(chat.state.messages.length, 4);
});

test("unreachable server offers retry", async () => {
  const dead = new ChatController(new ApiClient(server.url));
  await dead.open();
  await server.close();
  await dead.send("anyone?");
  assert.equal(dead.state.banner?.kind, "retry");
  assert.equal(dead.state.connection, "offline");
  assert.equal(dead.state.messages.length, 0);
  server = await startMock();
});

test("malformed reply shows a banner and the thread follows the server", async () => {
  await chat.send("first");
  server.faults.push("malformed");
  await chat.send("second");
  assert.equal(chat.state.banner?.kind, "error");
  assert.match(chat.state.banner!.message, /strategy/);
  assert.deepEqual(viewHistory(), expected(await serverHistory()));
});

test("view matches server history after every settled turn", async () => {
  const plan: Array<"ok" | "http500" | "malformed"> = ["ok", "http500", "ok", "malformed", "ok", "http500", "http500", "ok"];
  for (const [i, step] of plan.entries()) {
    if (step !== "ok") server.faults.push(step);
    await chat.send(`turn ${i}`);
    assert.deepEqual(viewHistory(), expected(await serverHistory()), `after step ${i}`);
    assert.equal(chat.state.inFlight, false);
  }
});

test("scores survive reconciliation for turns seen in this tab", async () => {
  await chat.send("one");
  await chat.send("two");
  for (const m of chat.state.messages) {
    if (m.role === "assistant") assert.equal(m.panel.scores.user_emotion?.top.length, 3);
  }
});

test("blank input is refused", async () => {
  assert.equal(await chat.send("   "), false);
  assert.equal(server.turns.length, 0);
});
