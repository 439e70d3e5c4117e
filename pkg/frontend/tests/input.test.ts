import { describe, expect, it } from "vitest";

import { BINDINGS, InputBinding, InputLock } from "../src/input.js";

describe("InputBinding", () => {
  it("maps bound keys and ignores unbound ones", () => {
    const binding = BINDINGS.gridnav;
    expect(binding.actionFor("ArrowUp")).toBe(0);
    expect(binding.actionFor(" ")).toBe(4);
    expect(binding.actionFor("q")).toBeNull();
  });

  it("rejects two keys on one action", () => {
    expect(() => new InputBinding([["a", 1], ["b", 1]])).toThrow(/bound to two keys/);
  });

  it("rejects one key bound twice", () => {
    expect(() => new InputBinding([["a", 1], ["a", 2]])).toThrow(/bound twice/);
  });
});

describe("InputLock", () => {
  it("admits one holder at a time", () => {
    const lock = new InputLock();
    expect(lock.acquire()).toBe(true);
    expect(lock.acquire()).toBe(false);
    expect(lock.isLocked).toBe(true);
    lock.release();
    expect(lock.acquire()).toBe(true);
  });
});
