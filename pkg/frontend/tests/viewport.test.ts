import { describe, expect, it } from "vitest";

import {
  canvasClickToPixel,
  canvasPointToImage,
  fitImage,
  imagePointToCanvas,
  pan,
  pixelCenterToCanvas,
  zoomAt,
  MAX_SCALE,
  MIN_SCALE,
} from "../src/viewport.js";
import type { Viewport } from "../src/viewport.js";

function mulberry32(seed: number) {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function randomViewport(rand: () => number): Viewport {
  return {
    scale: 0.3 + rand() * 30,
    offsetX: (rand() - 0.5) * 2000,
    offsetY: (rand() - 0.5) * 2000,
  };
}

describe("coordinate round trips", () => {
  it("pixel -> canvas marker position -> pixel is the identity across 20 random zoom/pan states", () => {
    const rand = mulberry32(20240824);
    const height = 480;
    const width = 640;
    for (let i = 0; i < 20; i++) {
      const vp = randomViewport(rand);
      for (let j = 0; j < 25; j++) {
        const pixel = {
          row: Math.floor(rand() * height),
          col: Math.floor(rand() * width),
        };
        const { x, y } = pixelCenterToCanvas(vp, pixel);
        const back = canvasClickToPixel(vp, x, y, height, width);
        expect(back).toEqual(pixel);
      }
    }
  });

  it("continuous image point -> canvas -> image point round trips to float precision", () => {
    const rand = mulberry32(7);
    for (let i = 0; i < 20; i++) {
      const vp = randomViewport(rand);
      const ix = rand() * 640;
      const iy = rand() * 480;
      const { x, y } = imagePointToCanvas(vp, ix, iy);
      const back = canvasPointToImage(vp, x, y);
      expect(back.ix).toBeCloseTo(ix, 9);
      expect(back.iy).toBeCloseTo(iy, 9);
    }
  });
});

describe("clicks outside the image", () => {
  it("returns null beyond any edge", () => {
    const vp: Viewport = { scale: 2, offsetX: 10, offsetY: 10 };
    expect(canvasClickToPixel(vp, 9, 50, 100, 100)).toBeNull(); // left of col 0
    expect(canvasClickToPixel(vp, 50, 9, 100, 100)).toBeNull(); // above row 0
    expect(canvasClickToPixel(vp, 10 + 200, 50, 100, 100)).toBeNull(); // col = width
    expect(canvasClickToPixel(vp, 50, 10 + 200, 100, 100)).toBeNull(); // row = height
    expect(canvasClickToPixel(vp, 10, 10, 100, 100)).toEqual({ row: 0, col: 0 });
    expect(canvasClickToPixel(vp, 10 + 199.9, 10 + 199.9, 100, 100)).toEqual({
      row: 99,
      col: 99,
    });
  });
});

describe("zoomAt", () => {
  it("keeps the image point under the cursor stationary", () => {
    const rand = mulberry32(99);
    for (let i = 0; i < 20; i++) {
      const vp = randomViewport(rand);
      const x = rand() * 900;
      const y = rand() * 640;
      const before = canvasPointToImage(vp, x, y);
      const after = canvasPointToImage(zoomAt(vp, x, y, 1.5), x, y);
      expect(after.ix).toBeCloseTo(before.ix, 9);
      expect(after.iy).toBeCloseTo(before.iy, 9);
    }
  });

  it("clamps the scale to its limits", () => {
    const vp: Viewport = { scale: 1, offsetX: 0, offsetY: 0 };
    expect(zoomAt(vp, 0, 0, 1e9).scale).toBe(MAX_SCALE);
    expect(zoomAt(vp, 0, 0, 1e-9).scale).toBe(MIN_SCALE);
  });

  it("zoom in then out by the same factor restores the viewport", () => {
    const vp: Viewport = { scale: 3, offsetX: 17, offsetY: -42 };
    const back = zoomAt(zoomAt(vp, 120, 80, 2), 120, 80, 0.5);
    expect(back.scale).toBeCloseTo(vp.scale, 9);
    expect(back.offsetX).toBeCloseTo(vp.offsetX, 9);
    expect(back.offsetY).toBeCloseTo(vp.offsetY, 9);
  });
});

describe("pan and fit", () => {
  it("pan shifts offsets only", () => {
    const vp: Viewport = { scale: 2.5, offsetX: 5, offsetY: 6 };
    expect(pan(vp, 10, -3)).toEqual({ scale: 2.5, offsetX: 15, offsetY: 3 });
  });

  it("fitImage centers the image inside the canvas", () => {
    const vp = fitImage(900, 640, 64, 64);
    const topLeft = imagePointToCanvas(vp, 0, 0);
    const bottomRight = imagePointToCanvas(vp, 64, 64);
    expect(topLeft.x + bottomRight.x).toBeCloseTo(900, 6);
    expect(topLeft.y + bottomRight.y).toBeCloseTo(640, 6);
    expect(bottomRight.x - topLeft.x).toBeLessThanOrEqual(900);
    expect(bottomRight.y - topLeft.y).toBeLessThanOrEqual(640);
  });
});
