import { describe, expect, it } from "vitest";

import { pushSample, SPARK_CAP, sparklinePath } from "../src/sparkline.js";

describe("sample window", () => {
  it("appends without mutating the input", () => {
    const original = [1, 2];
    const next = pushSample(original, 3);
    expect(next).toEqual([1, 2, 3]);
    expect(original).toEqual([1, 2]);
  });

  it("evicts the oldest sample at the cap", () => {
    let window: number[] = [];
    for (let i = 0; i < SPARK_CAP + 10; i++) window = pushSample(window, i);
    expect(window.length).toBe(SPARK_CAP);
    expect(window[0]).toBe(10);
    expect(window[window.length - 1]).toBe(SPARK_CAP + 9);
  });
});

describe("path generation", () => {
  function points(path: string): Array<[number, number]> {
    return path
      .replace(/[ML]/g, "")
      .trim()
      .split(/\s+/)
      .map((pair) => {
        const [x, y] = pair.split(",").map(Number);
        return [x, y];
      });
  }

  it("draws nothing for fewer than two samples", () => {
    expect(sparklinePath([], 120, 28)).toBe("");
    expect(sparklinePath([5], 120, 28)).toBe("");
  });

  it("a flat series is a mid-height line", () => {
    const path = sparklinePath([7, 7, 7], 120, 28);
    for (const [, y] of points(path)) expect(y).toBe(14);
  });

  it("higher values plot nearer the top (SVG y grows downward)", () => {
    const pts = points(sparklinePath([0, 10], 100, 30));
    expect(pts[0]).toEqual([0, 30]);
    expect(pts[1]).toEqual([100, 0]);
  });

  it("all coordinates stay inside the viewbox", () => {
    const values = Array.from({ length: 40 }, (_, i) => Math.sin(i / 3) * 1e6);
    for (const [x, y] of points(sparklinePath(values, 120, 28))) {
      expect(x).toBeGreaterThanOrEqual(0);
      expect(x).toBeLessThanOrEqual(120);
      expect(y).toBeGreaterThanOrEqual(0);
      expect(y).toBeLessThanOrEqual(28);
    }
  });
});
