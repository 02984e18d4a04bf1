// Browser entry point: wires the controller to the page in index.html.
import { ApiClient } from "./client.js";
import { ChatController } from "./controller.js";
import { renderBanner, renderThread } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const e = document.getElementById(id);
  if (!e) throw new Error(`missing #${id}`);
  return e as T;
}

export async function start(baseUrl: string): Promise<ChatController> {
  const controller = new ChatController(new ApiClient(baseUrl));
  const thread = el<HTMLDivElement>("thread");
  const banner = el<HTMLDivElement>("banner");
  const status = el<HTMLSpanElement>("status");
  const form = el<HTMLFormElement>("composer");
  const input = el<HTMLInputElement>("utterance");
  const send = el<HTMLButtonElement>("send");

  controller.subscribe((s) => {
    thread.innerHTML = renderThread(s);
    banner.innerHTML = renderBanner(s);
    status.textContent = s.connection;
    input.disabled = send.disabled = s.inFlight || s.sessionId === null;
    thread.scrollTop = thread.scrollHeight;
  });

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const text = input.value;
    void controller.send(text).then((accepted) => {
      if (accepted && controller.state.banner?.kind !== "retry") input.value = "";
      input.focus();
    });
  });
  banner.addEventListener("click", (ev) => {
    const action = (ev.target as HTMLElement).dataset["action"];
    if (action === "retry") void controller.retry();
    if (action === "dismiss") controller.dismissBanner();
  });

  await controller.open();
  return controller;
}

const params = new URLSearchParams(location.search);
void start(params.get("api") ?? "http://127.0.0.1:8080");
