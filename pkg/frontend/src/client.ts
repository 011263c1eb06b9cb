// Session client: socket lifecycle, message routing, input pumping.
// The socket is injected behind a minimal interface so tests can drive the
// client with a scripted fake (and node tests with the `ws` package).

import { KeyTracker, trackerFor } from "./keys.js";
import {
  FrameMessage, Mode, OpenedMessage, ServerMessage, openMessage,
  parseServerMessage, resetMessage,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((data: string) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
}

export interface ClientEvents {
  onFrame(frame: FrameMessage, kappa: number): void;
  onStatus(text: string, connected: boolean): void;
  onRejected(reason: string): void;
}

export class TeleopClient {
  private socket: SocketLike | null = null;
  private tracker: KeyTracker;
  private kappa = 0.8;
  private opened = false;
  live = false;

  constructor(
    private readonly makeSocket: (url: string) => SocketLike,
    private readonly events: ClientEvents,
    readonly mode: Mode,
    private readonly seed: number,
    private readonly task: object = {},
  ) {
    this.tracker = trackerFor(mode);
  }

  connect(url: string): void {
    this.events.onStatus("connecting...", false);
    const sock = this.makeSocket(url);
    this.socket = sock;
    sock.onopen = () => {
      sock.send(openMessage(this.mode, this.seed, this.task));
    };
    sock.onmessage = (data) => this.handle(data);
    sock.onclose = () => {
      this.live = false;
      this.opened = false;
      this.events.onStatus("disconnected", false);
    };
  }

  private handle(data: string): void {
    const msg = parseServerMessage(data);
    if (msg === null) {
      console.warn("skipping malformed message", data);
      return;
    }
    switch (msg.type) {
      case "opened": {
        const o = msg as OpenedMessage & { kappa?: number };
        if (typeof o.kappa === "number") this.kappa = o.kappa;
        this.opened = true;
        this.live = true;
        this.events.onStatus(`session ${o.session} (${o.mode})`, true);
        break;
      }
      case "frame": {
        const frame = msg as FrameMessage;
        if (frame.terminal !== null) this.live = false;
        this.events.onFrame(frame, this.kappa);
        break;
      }
      case "ack":
        if (!msg.accepted) this.events.onRejected(msg.reason ?? "rejected");
        break;
      case "error":
      case "fault":
        this.live = msg.type === "error" && this.live;
        this.events.onRejected(msg.reason);
        break;
    }
  }

  keydown(code: string): boolean {
    return this.tracker.keydown(code);
  }

  keyup(code: string): boolean {
    return this.tracker.keyup(code);
  }

  /** Animation-frame pump: forwards at most one coalesced input message. */
  pump(): void {
    if (!this.socket || !this.opened || !this.live) return;
    const msg = this.tracker.sample();
    if (msg !== null) this.socket.send(msg);
  }

  requestReset(): void {
    if (this.socket && this.opened) {
      this.tracker.reset();
      this.live = true;
      this.socket.send(resetMessage());
    }
  }

  close(): void {
    this.socket?.close();
  }
}
