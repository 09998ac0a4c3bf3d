/**
 * Mask wire format shared with the annotation service: column-major
 * uncompressed run-length counts, alternating background/foreground and
 * always starting with a background run (0 when pixel (0,0) is set),
 * packed as little-endian uint32 and base64-wrapped.
 */

export interface WireMask {
  size: [number, number]; // [height, width]
  counts_b64: string;
}

export interface DecodedMask {
  height: number;
  width: number;
  /** column-major order is unfolded: data[row * width + col], 0 or 1 */
  data: Uint8Array;
}

function base64ToBytes(b64: string): Uint8Array {
  if (typeof Buffer !== "undefined") {
    return new Uint8Array(Buffer.from(b64, "base64"));
  }
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

function bytesToBase64(bytes: Uint8Array): string {
  if (typeof Buffer !== "undefined") {
    return Buffer.from(bytes).toString("base64");
  }
  let bin = "";
  for (const b of bytes) bin += String.fromCharCode(b);
  return btoa(bin);
}

export function decodeCounts(b64: string): number[] {
  const bytes = base64ToBytes(b64);
  if (bytes.length % 4 !== 0) {
    throw new Error(`counts payload is ${bytes.length} bytes, not a multiple of 4`);
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const counts: number[] = [];
  for (let i = 0; i < bytes.length; i += 4) counts.push(view.getUint32(i, true));
  return counts;
}

export function encodeCounts(counts: number[]): string {
  const bytes = new Uint8Array(counts.length * 4);
  const view = new DataView(bytes.buffer);
  counts.forEach((c, i) => view.setUint32(i * 4, c, true));
  return bytesToBase64(bytes);
}

export function decodeWireMask(wire: WireMask): DecodedMask {
  const [height, width] = wire.size;
  const counts = decodeCounts(wire.counts_b64);
  const total = counts.reduce((a, b) => a + b, 0);
  if (total !== height * width) {
    throw new Error(`run lengths cover ${total} pixels, mask has ${height * width}`);
  }
  const data = new Uint8Array(height * width);
  let flat = 0; // column-major position
  let value = 0; // runs start with background
  for (const run of counts) {
    if (value === 1) {
      for (let i = flat; i < flat + run; i++) {
        const row = i % height;
        const col = Math.floor(i / height);
        data[row * width + col] = 1;
      }
    }
    flat += run;
    value ^= 1;
  }
  return { height, width, data };
}

export function encodeWireMask(mask: DecodedMask): WireMask {
  const { height, width, data } = mask;
  const counts: number[] = [];
  let value = 0;
  let run = 0;
  for (let i = 0; i < height * width; i++) {
    const row = i % height;
    const col = Math.floor(i / height);
    const v = data[row * width + col] ? 1 : 0;
    if (v === value) {
      run++;
    } else {
      counts.push(run);
      value = v;
      run = 1;
    }
  }
  counts.push(run);
  return { size: [height, width], counts_b64: encodeCounts(counts) };
}

export function maskArea(mask: DecodedMask): number {
  let n = 0;
  for (const v of mask.data) n += v;
  return n;
}
