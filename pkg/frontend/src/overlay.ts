/**
 * Pure rendering helpers: mask -> RGBA pixels, kept DOM-free so they can
 * be unit tested in node.
 */

import type { DecodedMask } from "./wire.js";

export interface Rgba {
  r: number;
  g: number;
  b: number;
  a: number; // 0..255
}

export const MASK_TINT: Rgba = { r: 255, g: 80, b: 40, a: 110 };
export const EXEMPLAR_TINT: Rgba = { r: 255, g: 200, b: 0, a: 110 };

/** RGBA byte buffer for the mask overlay: tint where mask = 1. */
export function maskToRgba(
  mask: DecodedMask,
  tint: Rgba = MASK_TINT,
): Uint8ClampedArray<ArrayBuffer> {
  const { height, width, data } = mask;
  const out = new Uint8ClampedArray(new ArrayBuffer(height * width * 4));
  for (let i = 0; i < height * width; i++) {
    if (data[i]) {
      out[i * 4] = tint.r;
      out[i * 4 + 1] = tint.g;
      out[i * 4 + 2] = tint.b;
      out[i * 4 + 3] = tint.a;
    }
  }
  return out;
}
