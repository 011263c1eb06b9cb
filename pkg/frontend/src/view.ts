// Pure view-model derivation from frames: everything the canvas and HUD
// draw is computed here so rendering logic stays unit-testable. The UI
// never invents state; all fields trace back to a received frame.

import { BeliefEntry, FrameMessage } from "./protocol.js";

export interface Glyph {
  kind: "object" | "bin" | "gripper" | "goal-ring";
  row: number;
  col: number;
  id?: number;
  alive?: boolean;
  closed?: boolean;
  holding?: boolean;
}

export interface BeliefBar {
  goal: number;
  p: number;
  isMap: boolean;
}

export interface ViewModel {
  gridSize: number;
  glyphs: Glyph[];
  beliefBars: BeliefBar[] | null;
  tick: number;
  phase: string;
  action: string | null;
  amplified: boolean;
  error: boolean;
  terminal: null | "success" | "failure";
  metrics: Record<string, unknown>;
}

/** The goal the UI highlights: the posterior argmax, only when it clears
 * the confidence threshold the service reported at open time. */
export function mapGoal(belief: BeliefEntry[] | undefined, kappa: number): number | null {
  if (!belief || belief.length === 0) return null;
  let best = belief[0];
  for (const b of belief) if (b.p > best.p) best = b;
  return best.p >= kappa ? best.goal : null;
}

export function deriveView(frame: FrameMessage, kappa: number): ViewModel {
  const glyphs: Glyph[] = [];
  const highlighted = mapGoal(frame.belief, kappa);
  for (const o of frame.grid.objects) {
    glyphs.push({ kind: "object", row: o.cell[0], col: o.cell[1], id: o.id, alive: o.alive });
    if (frame.phase === "pickup" && highlighted === o.id) {
      glyphs.push({ kind: "goal-ring", row: o.cell[0], col: o.cell[1], id: o.id });
    }
  }
  for (const b of frame.grid.bins) {
    glyphs.push({ kind: "bin", row: b.cell[0], col: b.cell[1], id: b.id });
    if (frame.phase === "dropoff" && highlighted === b.id) {
      glyphs.push({ kind: "goal-ring", row: b.cell[0], col: b.cell[1], id: b.id });
    }
  }
  glyphs.push({
    kind: "gripper",
    row: frame.gripper[0],
    col: frame.gripper[1],
    closed: frame.grid.gripper_closed,
    holding: frame.grid.held !== null,
  });
  let bars: BeliefBar[] | null = null;
  if (frame.belief !== undefined) {
    bars = frame.belief.map((b) => ({ goal: b.goal, p: b.p, isMap: b.goal === highlighted }));
  }
  return {
    gridSize: frame.grid.size,
    glyphs,
    beliefBars: bars,
    tick: frame.tick,
    phase: frame.phase,
    action: frame.action,
    amplified: frame.flags?.amplified ?? false,
    error: frame.flags?.error ?? false,
    terminal: frame.terminal,
    metrics: frame.metrics ?? {},
  };
}

export function formatMetric(value: unknown): string {
  if (value === null || value === undefined) return "-";
  if (typeof value === "number") {
    return Number.isInteger(value) ? String(value) : value.toFixed(2);
  }
  if (Array.isArray(value)) return value.map(formatMetric).join(" .. ");
  return String(value);
}

// metrics worth a HUD row, in display order
export const HUD_METRICS: [string, string][] = [
  ["ticks", "ticks"],
  ["total_inputs", "inputs"],
  ["error_actions_s", "error (s)"],
  ["amplified_actions_s", "amplified (s)"],
  ["cumulative_reward", "reward"],
  ["success_rate", "success %"],
  ["completion_time_s", "time (s)"],
];
