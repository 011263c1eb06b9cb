// Wire protocol: one JSON message per websocket frame, mirroring the
// teleop service. Parsing is defensive; a malformed frame yields null and
// the caller skips it without dropping the connection.

export type Mode = "manual" | "aras" | "ho";

export interface GridObject {
  id: number;
  cell: [number, number];
  alive: boolean;
}

export interface GridBin {
  id: number;
  cell: [number, number];
}

export interface GridSnapshot {
  size: number;
  objects: GridObject[];
  bins: GridBin[];
  held: number | null;
  gripper_closed: boolean;
}

export interface BeliefEntry {
  goal: number;
  p: number;
}

export interface FrameMessage {
  type: "frame";
  tick: number;
  grid: GridSnapshot;
  gripper: [number, number];
  phase: "pickup" | "dropoff";
  belief?: BeliefEntry[];
  action: string | null;
  flags: { amplified: boolean; error: boolean };
  metrics: Record<string, unknown>;
  terminal: null | "success" | "failure";
}

export interface OpenedMessage {
  type: "opened";
  session: string;
  mode: Mode;
  tick_ms: number;
}

export interface AckMessage {
  type: "ack";
  accepted: boolean;
  reason?: string;
}

export interface ErrorMessage {
  type: "error" | "fault";
  reason: string;
}

export type ServerMessage = FrameMessage | OpenedMessage | AckMessage | ErrorMessage;

export function openMessage(mode: Mode, seed: number, task: object = {}): string {
  return JSON.stringify({ type: "open", mode, seed, task });
}

export function valueInput(value: -1 | 0 | 1): string {
  return JSON.stringify({ type: "input", value });
}

export function actionInput(action: string): string {
  return JSON.stringify({ type: "input", action });
}

export function resetMessage(): string {
  return JSON.stringify({ type: "reset" });
}

function isCell(x: unknown): x is [number, number] {
  return Array.isArray(x) && x.length === 2 &&
    typeof x[0] === "number" && typeof x[1] === "number";
}

export function parseServerMessage(raw: string): ServerMessage | null {
  let msg: any;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  switch (msg.type) {
    case "opened":
      if (typeof msg.session !== "string") return null;
      return msg as OpenedMessage;
    case "ack":
      if (typeof msg.accepted !== "boolean") return null;
      return msg as AckMessage;
    case "error":
    case "fault":
      return msg as ErrorMessage;
    case "frame": {
      if (typeof msg.tick !== "number") return null;
      if (!isCell(msg.gripper)) return null;
      const g = msg.grid;
      if (typeof g !== "object" || g === null) return null;
      if (typeof g.size !== "number" || !Array.isArray(g.objects) || !Array.isArray(g.bins)) {
        return null;
      }
      if (msg.belief !== undefined) {
        if (!Array.isArray(msg.belief)) return null;
        for (const b of msg.belief) {
          if (typeof b?.goal !== "number" || typeof b?.p !== "number") return null;
        }
      }
      return msg as FrameMessage;
    }
    default:
      return null;
  }
}
