/**
 * Client-side session model: mirrors the server's interaction protocol so
 * the UI can reject illegal actions before a round trip.
 */

import type { WireMask } from "./wire.js";

export type Polarity = "positive" | "negative";
export type Mode = "single" | "multi";

export interface ClickRecord {
  row: number;
  col: number;
  polarity: Polarity;
}

export interface MaskResponse {
  session_id: string;
  mode: Mode;
  mask: WireMask;
  clicks: ClickRecord[];
  iou_vs_gt?: number;
}

export const POSITIVE_COLOR = "#2ecc40"; // green
export const NEGATIVE_COLOR = "#0074d9"; // blue

export function markerColor(polarity: Polarity): string {
  return polarity === "positive" ? POSITIVE_COLOR : NEGATIVE_COLOR;
}

export class SessionModel {
  sessionId: string;
  mode: Mode = "single";
  clicks: ClickRecord[] = [];
  mask: WireMask | null = null;
  iouVsGt: number | null = null;

  constructor(sessionId: string) {
    this.sessionId = sessionId;
  }

  /**
   * The first click of the single-object phase must be positive; every
   * later click (and any recall click in multi mode) may be either.
   */
  canClick(polarity: Polarity): boolean {
    if (this.mode === "single" && this.clicks.length === 0) {
      return polarity === "positive";
    }
    return true;
  }

  canUndo(): boolean {
    return this.clicks.length > 0;
  }

  canFinalize(): boolean {
    return this.mode === "single" && this.clicks.length > 0;
  }

  canExport(): boolean {
    return this.mode === "multi" || this.clicks.length > 0;
  }

  /** Absorb the server's authoritative state after any mutation. */
  applyResponse(resp: MaskResponse): void {
    if (resp.session_id !== this.sessionId) {
      throw new Error(`response for ${resp.session_id}, model is ${this.sessionId}`);
    }
    this.mode = resp.mode;
    this.clicks = resp.clicks.slice();
    this.mask = resp.mask;
    this.iouVsGt = resp.iou_vs_gt ?? null;
  }
}
