import { describe, expect, it } from "vitest";

import { StrokeCapture } from "../src/strokes.js";

describe("stroke capture", () => {
  it("normalizes canvas pixels to [0,1]^2 with y up", () => {
    const cap = new StrokeCapture(512);
    cap.begin({ x: 0, y: 512 });
    cap.move({ x: 512, y: 0 });
    cap.end();
    const [stroke] = cap.all();
    expect(stroke[0]).toEqual([0, 0]);
    expect(stroke[stroke.length - 1]).toEqual([1, 1]);
  });

  it("drops sub-pixel jitter but keeps real motion", () => {
    const cap = new StrokeCapture(512);
    cap.begin({ x: 100, y: 100 });
    cap.move({ x: 100.2, y: 100.1 }); // < half a pixel
    cap.move({ x: 140, y: 160 });
    cap.end();
    expect(cap.all()[0].length).toBe(2);
  });

  it("discards strokes with fewer than two points", () => {
    const cap = new StrokeCapture(512);
    cap.begin({ x: 10, y: 10 });
    cap.end();
    expect(cap.count).toBe(0);
  });

  it("submits raw points without smoothing", () => {
    const cap = new StrokeCapture(256);
    const zigzag = [
      { x: 10, y: 10 }, { x: 40, y: 80 }, { x: 70, y: 10 }, { x: 100, y: 80 },
    ];
    cap.addPolyline(zigzag);
    const [stroke] = cap.all();
    expect(stroke.length).toBe(4);
    expect(stroke[1][0]).toBeCloseTo(40 / 256, 12);
    expect(stroke[1][1]).toBeCloseTo(1 - 80 / 256, 12);
  });

  it("clear resets captured strokes", () => {
    const cap = new StrokeCapture(512);
    cap.addPolyline([{ x: 0, y: 0 }, { x: 50, y: 50 }]);
    expect(cap.count).toBe(1);
    cap.clear();
    expect(cap.count).toBe(0);
  });
});
