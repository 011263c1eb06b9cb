// Boot: wire controls, socket, keyboard, and renderers together.

import { TeleopClient, SocketLike } from "./client.js";
import { MANUAL_KEYS } from "./keys.js";
import { CanvasRenderer, HudRenderer } from "./render.js";
import { Mode } from "./protocol.js";
import { deriveView } from "./view.js";

function browserSocket(url: string): SocketLike {
  const ws = new WebSocket(url);
  const wrapper: SocketLike = {
    send: (d) => ws.send(d),
    close: () => ws.close(),
    onmessage: null,
    onopen: null,
    onclose: null,
  };
  ws.onmessage = (ev) => wrapper.onmessage?.(String(ev.data));
  ws.onopen = () => wrapper.onopen?.();
  ws.onclose = () => wrapper.onclose?.();
  ws.onerror = () => wrapper.onclose?.();
  return wrapper;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

let client: TeleopClient | null = null;

function setControlsEnabled(connected: boolean): void {
  el<HTMLButtonElement>("connect").textContent = connected ? "reconnect" : "connect";
  el<HTMLButtonElement>("reset").disabled = !connected;
  el<HTMLElement>("keymap-aras").style.display = "none";
  el<HTMLElement>("keymap-manual").style.display = "none";
  if (connected && client) {
    const id = client.mode === "manual" ? "keymap-manual" : "keymap-aras";
    el<HTMLElement>(id).style.display = "block";
  }
}

function connect(): void {
  client?.close();
  const mode = el<HTMLSelectElement>("mode").value as Mode;
  const seed = parseInt(el<HTMLInputElement>("seed").value, 10) || 0;
  const layout = el<HTMLSelectElement>("layout").value;
  const goalObject = parseInt(el<HTMLInputElement>("goal-object").value, 10) || 0;
  const goalBin = parseInt(el<HTMLInputElement>("goal-bin").value, 10) || 0;
  const url = el<HTMLInputElement>("url").value;
  const canvas = new CanvasRenderer(el<HTMLCanvasElement>("workspace"));
  const hud = new HudRenderer(
    el("belief"), el("status-line"), el("action-line"), el("metrics"), el("banner"),
  );
  const modeBadge = el("mode-badge");
  client = new TeleopClient(browserSocket, {
    onFrame: (frame, kappa) => {
      const view = deriveView(frame, kappa);
      canvas.draw(view);
      hud.draw(view);
    },
    onStatus: (text, connected) => {
      el("conn-status").textContent = text;
      modeBadge.textContent = mode.toUpperCase();
      setControlsEnabled(connected);
    },
    onRejected: (reason) => {
      el("conn-status").textContent = `rejected: ${reason}`;
    },
  }, mode, seed, { layout, goal_object: goalObject, goal_bin: goalBin });
  client.connect(url);
}

window.addEventListener("keydown", (ev) => {
  if (ev.repeat) {
    // auto-repeat only matters for manual one-shot keys
    if (client?.mode !== "manual") return;
  }
  if (client?.keydown(ev.code)) ev.preventDefault();
});

window.addEventListener("keyup", (ev) => {
  if (client?.keyup(ev.code)) ev.preventDefault();
});

function pumpLoop(): void {
  client?.pump();
  requestAnimationFrame(pumpLoop);
}

window.addEventListener("DOMContentLoaded", () => {
  el<HTMLButtonElement>("connect").addEventListener("click", connect);
  el<HTMLButtonElement>("reset").addEventListener("click", () => client?.requestReset());
  const legend = el("keymap-manual");
  legend.textContent = Object.entries(MANUAL_KEYS)
    .map(([k, a]) => `${k.replace("Key", "").replace("Arrow", "")}=${a}`)
    .join("  ");
  setControlsEnabled(false);
  requestAnimationFrame(pumpLoop);
});
