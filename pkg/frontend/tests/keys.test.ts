import { describe, expect, it } from "vitest";

import { ArasKeyTracker, ManualKeyTracker } from "../src/keys.js";

const parse = (s: string | null) => (s === null ? null : JSON.parse(s));

describe("assisted-mode key tracking", () => {
  it("streams +1 while the right arrow is held, then one 0 on release", () => {
    const t = new ArasKeyTracker();
    expect(t.keydown("ArrowRight")).toBe(true);
    expect(parse(t.sample())).toEqual({ type: "input", value: 1 });
    expect(parse(t.sample())).toEqual({ type: "input", value: 1 }); // still held
    t.keyup("ArrowRight");
    expect(parse(t.sample())).toEqual({ type: "input", value: 0 });
    expect(t.sample()).toBeNull(); // idle stays silent
  });

  it("left maps to -1 and opposing keys cancel", () => {
    const t = new ArasKeyTracker();
    t.keydown("ArrowLeft");
    expect(parse(t.sample())).toEqual({ type: "input", value: -1 });
    t.keydown("ArrowRight");
    expect(parse(t.sample())).toEqual({ type: "input", value: 0 });
  });

  it("ignores non-lateral keys entirely", () => {
    const t = new ArasKeyTracker();
    expect(t.keydown("KeyG")).toBe(false);
    expect(t.keydown("ArrowUp")).toBe(false);
    expect(t.sample()).toBeNull();
  });
});

describe("manual-mode key tracking", () => {
  it("emits one action message per keypress", () => {
    const t = new ManualKeyTracker();
    expect(t.keydown("KeyG")).toBe(true);
    expect(parse(t.sample())).toEqual({ type: "input", action: "grasp" });
    expect(t.sample()).toBeNull(); // one-shot, no repeat
  });

  it("coalesces to the last key within a frame", () => {
    const t = new ManualKeyTracker();
    t.keydown("ArrowLeft");
    t.keydown("ArrowUp");
    expect(parse(t.sample())).toEqual({ type: "input", action: "forward" });
  });

  it("covers the full action keymap", () => {
    const t = new ManualKeyTracker();
    const expected: Record<string, string> = {
      ArrowLeft: "left", ArrowRight: "right", ArrowUp: "forward",
      ArrowDown: "backward", Space: "hold", KeyG: "grasp", KeyR: "release",
    };
    for (const [code, action] of Object.entries(expected)) {
      t.keydown(code);
      expect(parse(t.sample())).toEqual({ type: "input", action });
    }
  });

  it("ignores unmapped keys", () => {
    const t = new ManualKeyTracker();
    expect(t.keydown("KeyZ")).toBe(false);
    expect(t.sample()).toBeNull();
  });
});
