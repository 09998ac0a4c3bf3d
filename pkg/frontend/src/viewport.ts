/**
 * Zoom/pan viewport math, kept pure so coordinate mapping is testable.
 *
 * Canvas coordinates are CSS pixels on the drawing surface; image
 * coordinates are continuous pixel positions where integer pixel
 * (row, col) occupies [col, col+1) x [row, row+1).
 */

export interface Viewport {
  scale: number; // canvas pixels per image pixel, > 0
  offsetX: number; // canvas x of image x = 0
  offsetY: number; // canvas y of image y = 0
}

export interface Pixel {
  row: number;
  col: number;
}

export const MIN_SCALE = 0.25;
export const MAX_SCALE = 64;

export function imagePointToCanvas(
  vp: Viewport,
  ix: number,
  iy: number,
): { x: number; y: number } {
  return { x: ix * vp.scale + vp.offsetX, y: iy * vp.scale + vp.offsetY };
}

export function canvasPointToImage(
  vp: Viewport,
  x: number,
  y: number,
): { ix: number; iy: number } {
  return { ix: (x - vp.offsetX) / vp.scale, iy: (y - vp.offsetY) / vp.scale };
}

/** The integer image pixel under a canvas click, or null if outside. */
export function canvasClickToPixel(
  vp: Viewport,
  x: number,
  y: number,
  height: number,
  width: number,
): Pixel | null {
  const { ix, iy } = canvasPointToImage(vp, x, y);
  const col = Math.floor(ix);
  const row = Math.floor(iy);
  if (row < 0 || row >= height || col < 0 || col >= width) return null;
  return { row, col };
}

/** Canvas position of a pixel's center (used to draw click markers). */
export function pixelCenterToCanvas(
  vp: Viewport,
  pixel: Pixel,
): { x: number; y: number } {
  return imagePointToCanvas(vp, pixel.col + 0.5, pixel.row + 0.5);
}

/** Zoom by `factor` keeping the image point under (x, y) stationary. */
export function zoomAt(vp: Viewport, x: number, y: number, factor: number): Viewport {
  const scale = Math.min(MAX_SCALE, Math.max(MIN_SCALE, vp.scale * factor));
  const applied = scale / vp.scale;
  return {
    scale,
    offsetX: x - (x - vp.offsetX) * applied,
    offsetY: y - (y - vp.offsetY) * applied,
  };
}

export function pan(vp: Viewport, dx: number, dy: number): Viewport {
  return { ...vp, offsetX: vp.offsetX + dx, offsetY: vp.offsetY + dy };
}

/** Viewport that fits an image into a canvas with a small margin. */
export function fitImage(
  canvasW: number,
  canvasH: number,
  imageW: number,
  imageH: number,
): Viewport {
  const scale = Math.min(canvasW / imageW, canvasH / imageH) * 0.95;
  return {
    scale,
    offsetX: (canvasW - imageW * scale) / 2,
    offsetY: (canvasH - imageH * scale) / 2,
  };
}
