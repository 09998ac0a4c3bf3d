import { describe, expect, it } from "vitest";

import {
  markerColor,
  NEGATIVE_COLOR,
  POSITIVE_COLOR,
  SessionModel,
} from "../src/session.js";
import type { MaskResponse } from "../src/session.js";
import { maskToRgba } from "../src/overlay.js";

function response(overrides: Partial<MaskResponse> = {}): MaskResponse {
  return {
    session_id: "abc",
    mode: "single",
    mask: { size: [2, 2], counts_b64: "BAAAAA==" }, // [4] = all background
    clicks: [],
    ...overrides,
  };
}

describe("first-click rule", () => {
  it("only a positive click may open the single-object phase", () => {
    const m = new SessionModel("abc");
    expect(m.canClick("negative")).toBe(false);
    expect(m.canClick("positive")).toBe(true);
  });

  it("negatives are allowed after the first click", () => {
    const m = new SessionModel("abc");
    m.applyResponse(response({ clicks: [{ row: 1, col: 1, polarity: "positive" }] }));
    expect(m.canClick("negative")).toBe(true);
  });

  it("multi mode accepts a leading negative recall click", () => {
    const m = new SessionModel("abc");
    m.applyResponse(response({ mode: "multi", clicks: [] }));
    expect(m.canClick("negative")).toBe(true);
  });
});

describe("action availability", () => {
  it("undo and finalize need at least one click", () => {
    const m = new SessionModel("abc");
    expect(m.canUndo()).toBe(false);
    expect(m.canFinalize()).toBe(false);
    m.applyResponse(response({ clicks: [{ row: 0, col: 0, polarity: "positive" }] }));
    expect(m.canUndo()).toBe(true);
    expect(m.canFinalize()).toBe(true);
  });

  it("finalize is single-mode only; export opens up in multi mode", () => {
    const m = new SessionModel("abc");
    expect(m.canExport()).toBe(false);
    m.applyResponse(response({ mode: "multi" }));
    expect(m.canFinalize()).toBe(false);
    expect(m.canExport()).toBe(true);
  });
});

describe("server state absorption", () => {
  it("takes mode, clicks, mask, and IoU from the response", () => {
    const m = new SessionModel("abc");
    m.applyResponse(
      response({
        mode: "multi",
        clicks: [{ row: 3, col: 4, polarity: "negative" }],
        iou_vs_gt: 0.75,
      }),
    );
    expect(m.mode).toBe("multi");
    expect(m.clicks).toEqual([{ row: 3, col: 4, polarity: "negative" }]);
    expect(m.iouVsGt).toBe(0.75);
  });

  it("rejects a response for another session", () => {
    const m = new SessionModel("abc");
    expect(() => m.applyResponse(response({ session_id: "zzz" }))).toThrow(/zzz/);
  });
});

describe("markers and overlay", () => {
  it("positive clicks are green, negative clicks are blue", () => {
    expect(markerColor("positive")).toBe(POSITIVE_COLOR);
    expect(markerColor("negative")).toBe(NEGATIVE_COLOR);
    expect(POSITIVE_COLOR).toBe("#2ecc40");
    expect(NEGATIVE_COLOR).toBe("#0074d9");
  });

  it("overlay tints exactly the masked pixels", () => {
    const rgba = maskToRgba({
      height: 1,
      width: 3,
      data: new Uint8Array([0, 1, 0]),
    });
    expect(rgba[3]).toBe(0); // transparent off-mask
    expect(rgba[7]).toBeGreaterThan(0); // tinted on-mask
    expect(rgba[11]).toBe(0);
  });
});
