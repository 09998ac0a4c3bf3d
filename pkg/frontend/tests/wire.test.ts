import { describe, expect, it } from "vitest";

import {
  decodeCounts,
  decodeWireMask,
  encodeCounts,
  encodeWireMask,
  maskArea,
} from "../src/wire.js";
import type { DecodedMask } from "../src/wire.js";

function b64FromCounts(counts: number[]): string {
  const bytes = new Uint8Array(counts.length * 4);
  const view = new DataView(bytes.buffer);
  counts.forEach((c, i) => view.setUint32(i * 4, c, true));
  return Buffer.from(bytes).toString("base64");
}

describe("counts codec", () => {
  it("decodes little-endian uint32 words", () => {
    // 1 and 258 = 0x102: byte layouts [1,0,0,0] and [2,1,0,0]
    const b64 = Buffer.from(new Uint8Array([1, 0, 0, 0, 2, 1, 0, 0])).toString(
      "base64",
    );
    expect(decodeCounts(b64)).toEqual([1, 258]);
  });

  it("round trips through encodeCounts", () => {
    const counts = [0, 1, 15, 4096, 70000];
    expect(decodeCounts(encodeCounts(counts))).toEqual(counts);
  });

  it("rejects payloads that are not whole words", () => {
    expect(() => decodeCounts(Buffer.from([1, 2, 3]).toString("base64"))).toThrow(
      /multiple of 4/,
    );
  });
});

describe("mask decoding", () => {
  it("unfolds column-major runs starting with background", () => {
    // 2x2 mask with (0,0) and (1,1) set: column-major scan order is
    // (0,0),(1,0),(0,1),(1,1) = 1,0,0,1 so counts are [0,1,2,1]
    const mask = decodeWireMask({
      size: [2, 2],
      counts_b64: b64FromCounts([0, 1, 2, 1]),
    });
    expect(Array.from(mask.data)).toEqual([1, 0, 0, 1]);
  });

  it("leads with a zero run exactly when pixel (0,0) is set", () => {
    const set = decodeWireMask({ size: [4, 4], counts_b64: b64FromCounts([0, 1, 15]) });
    expect(set.data[0]).toBe(1);
    expect(maskArea(set)).toBe(1);
    const unset = decodeWireMask({ size: [4, 4], counts_b64: b64FromCounts([1, 1, 14]) });
    expect(unset.data[0]).toBe(0);
    expect(unset.data[1 * 4 + 0]).toBe(1); // second column-major pixel is (1,0)
  });

  it("distinguishes column-major from row-major on a non-square mask", () => {
    // 2x3, only pixel (0,1) set. Column-major flat index is 2.
    const mask = decodeWireMask({
      size: [2, 3],
      counts_b64: b64FromCounts([2, 1, 3]),
    });
    expect(Array.from(mask.data)).toEqual([0, 1, 0, 0, 0, 0]);
  });

  it("rejects counts that do not cover the mask", () => {
    expect(() =>
      decodeWireMask({ size: [2, 2], counts_b64: b64FromCounts([1, 1]) }),
    ).toThrow(/cover/);
  });

  it("round trips random masks through the encoder", () => {
    let seed = 12345;
    const rand = () => {
      seed = (seed * 1103515245 + 12345) & 0x7fffffff;
      return seed / 0x7fffffff;
    };
    for (let trial = 0; trial < 50; trial++) {
      const height = 1 + Math.floor(rand() * 9);
      const width = 1 + Math.floor(rand() * 9);
      const data = new Uint8Array(height * width);
      for (let i = 0; i < data.length; i++) data[i] = rand() < 0.4 ? 1 : 0;
      const mask: DecodedMask = { height, width, data };
      const back = decodeWireMask(encodeWireMask(mask));
      expect(back.height).toBe(height);
      expect(back.width).toBe(width);
      expect(Array.from(back.data)).toEqual(Array.from(data));
    }
  });
});
