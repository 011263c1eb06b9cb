import { describe, expect, it } from "vitest";

import { SocketLike, TeleopClient } from "../src/client.js";
import { FrameMessage } from "../src/protocol.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  onmessage: ((data: string) => void) | null = null;
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  serverSays(obj: object): void {
    this.onmessage?.(JSON.stringify(obj));
  }
}

function harness(mode: "aras" | "manual" = "aras") {
  const sock = new FakeSocket();
  const frames: FrameMessage[] = [];
  const kappas: number[] = [];
  const status: [string, boolean][] = [];
  const rejected: string[] = [];
  const client = new TeleopClient(() => sock, {
    onFrame: (f, k) => {
      frames.push(f);
      kappas.push(k);
    },
    onStatus: (t, c) => status.push([t, c]),
    onRejected: (r) => rejected.push(r),
  }, mode, 7, { layout: "study" });
  client.connect("ws://test");
  sock.onopen?.();
  return { sock, client, frames, kappas, status, rejected };
}

const OPENED = { type: "opened", session: "s1", mode: "aras", tick_ms: 0, kappa: 0.8 };

function someFrame(terminal: null | "success" = null): object {
  return {
    type: "frame", tick: 1,
    grid: { size: 16, objects: [], bins: [], held: null, gripper_closed: false },
    gripper: [0, 8], phase: "pickup", action: "right",
    flags: { amplified: false, error: false }, metrics: {}, terminal,
  };
}

describe("TeleopClient", () => {
  it("sends the open envelope on connect", () => {
    const { sock } = harness();
    expect(JSON.parse(sock.sent[0])).toEqual(
      { type: "open", mode: "aras", seed: 7, task: { layout: "study" } });
  });

  it("passes frames through with the negotiated kappa", () => {
    const { sock, frames, kappas } = harness();
    sock.serverSays(OPENED);
    sock.serverSays(someFrame());
    expect(frames).toHaveLength(1);
    expect(kappas[0]).toBe(0.8);
  });

  it("skips malformed frames without dropping the connection", () => {
    const { sock, frames, status } = harness();
    sock.serverSays(OPENED);
    sock.onmessage?.("{broken json");
    sock.serverSays({ type: "frame", tick: "bad" });
    sock.serverSays(someFrame());
    expect(frames).toHaveLength(1);
    expect(status.at(-1)![1]).toBe(true);
  });

  it("pumps at most one coalesced input per animation frame", () => {
    const { sock, client } = harness();
    sock.serverSays(OPENED);
    const before = sock.sent.length;
    client.keydown("ArrowRight");
    client.keydown("ArrowRight");
    client.pump();
    expect(sock.sent.length).toBe(before + 1);
    expect(JSON.parse(sock.sent.at(-1)!)).toEqual({ type: "input", value: 1 });
  });

  it("ignores grasp keys entirely in assisted mode", () => {
    const { sock, client } = harness();
    sock.serverSays(OPENED);
    const before = sock.sent.length;
    expect(client.keydown("KeyG")).toBe(false);
    client.pump();
    expect(sock.sent.length).toBe(before);
  });

  it("emits a grasp input in manual mode", () => {
    const { sock, client } = harness("manual");
    sock.serverSays({ ...OPENED, mode: "manual" });
    client.keydown("KeyG");
    client.pump();
    expect(JSON.parse(sock.sent.at(-1)!)).toEqual({ type: "input", action: "grasp" });
  });

  it("stops pumping after a terminal frame until reset", () => {
    const { sock, client } = harness();
    sock.serverSays(OPENED);
    sock.serverSays(someFrame("success"));
    const before = sock.sent.length;
    client.keydown("ArrowRight");
    client.pump();
    expect(sock.sent.length).toBe(before);
    client.requestReset();
    expect(JSON.parse(sock.sent.at(-1)!)).toEqual({ type: "reset" });
  });

  it("surfaces rejections and disconnects visibly", () => {
    const { sock, rejected, status } = harness();
    sock.serverSays(OPENED);
    sock.serverSays({ type: "ack", accepted: false, reason: "nope" });
    expect(rejected).toEqual(["nope"]);
    sock.close();
    expect(status.at(-1)).toEqual(["disconnected", false]);
  });
});
