// Keyboard capture state machines, kept free of DOM types so they unit-test
// headlessly. One outgoing message at most per animation frame.

import { Mode, actionInput, valueInput } from "./protocol.js";

// manual-mode keymap: every robot action has a key
export const MANUAL_KEYS: Record<string, string> = {
  ArrowLeft: "left",
  ArrowRight: "right",
  ArrowUp: "forward",
  ArrowDown: "backward",
  Space: "hold",
  KeyG: "grasp",
  KeyR: "release",
};

// assisted mode: only the 1-D lateral channel exists
const ARAS_KEYS = new Set(["ArrowLeft", "ArrowRight"]);

export class ArasKeyTracker {
  private left = false;
  private right = false;
  private lastSent = 0; // a fresh tracker is already neutral; stay silent

  keydown(code: string): boolean {
    if (!ARAS_KEYS.has(code)) return false;
    if (code === "ArrowLeft") this.left = true;
    else this.right = true;
    return true;
  }

  keyup(code: string): boolean {
    if (!ARAS_KEYS.has(code)) return false;
    if (code === "ArrowLeft") this.left = false;
    else this.right = false;
    return true;
  }

  value(): -1 | 0 | 1 {
    if (this.left === this.right) return 0; // neither, or both cancel out
    return this.left ? -1 : 1;
  }

  /** Called once per animation frame: a held key streams its value, a
   * release sends one 0, idle sends nothing. */
  sample(): string | null {
    const v = this.value();
    if (v !== 0 || this.lastSent !== 0) {
      this.lastSent = v;
      return valueInput(v);
    }
    return null;
  }

  reset(): void {
    this.left = this.right = false;
    this.lastSent = 0;
  }
}

export class ManualKeyTracker {
  private pending: string | null = null;

  keydown(code: string): boolean {
    const action = MANUAL_KEYS[code];
    if (!action) return false;
    this.pending = action; // last writer wins within a frame
    return true;
  }

  keyup(_code: string): boolean {
    return false;
  }

  sample(): string | null {
    if (this.pending === null) return null;
    const msg = actionInput(this.pending);
    this.pending = null;
    return msg;
  }

  reset(): void {
    this.pending = null;
  }
}

export type KeyTracker = ArasKeyTracker | ManualKeyTracker;

export function trackerFor(mode: Mode): KeyTracker {
  return mode === "manual" ? new ManualKeyTracker() : new ArasKeyTracker();
}
