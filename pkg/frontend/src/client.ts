/** Thin fetch wrapper around the annotation service's HTTP API. */

import type { MaskResponse, Polarity } from "./session.js";

export class ApiError extends Error {
  status: number;
  code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.status = status;
    this.code = code;
  }
}

async function parseOrThrow<T>(resp: Response): Promise<T> {
  if (resp.ok) return (await resp.json()) as T;
  let code = "error";
  let message = resp.statusText;
  try {
    const body = await resp.json();
    code = body.code ?? code;
    message = body.message ?? message;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, code, message);
}

export interface SessionListing {
  session_id: string;
  mode: string;
  clicks: number;
}

export class ApiClient {
  baseUrl: string;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  async createSession(image: Blob, gtRle?: object): Promise<string> {
    const form = new FormData();
    form.append("image", image, "image.png");
    if (gtRle) form.append("gt_rle", JSON.stringify(gtRle));
    const resp = await fetch(`${this.baseUrl}/api/sessions`, {
      method: "POST",
      body: form,
    });
    const body = await parseOrThrow<{ session_id: string }>(resp);
    return body.session_id;
  }

  async listSessions(): Promise<SessionListing[]> {
    const resp = await fetch(`${this.baseUrl}/api/sessions`);
    const body = await parseOrThrow<{ sessions: SessionListing[] }>(resp);
    return body.sessions;
  }

  async click(
    sessionId: string,
    row: number,
    col: number,
    polarity: Polarity,
  ): Promise<MaskResponse> {
    const resp = await fetch(`${this.baseUrl}/api/sessions/${sessionId}/clicks`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ row, col, polarity }),
    });
    return parseOrThrow<MaskResponse>(resp);
  }

  async undo(sessionId: string): Promise<MaskResponse> {
    const resp = await fetch(
      `${this.baseUrl}/api/sessions/${sessionId}/clicks/last`,
      { method: "DELETE" },
    );
    return parseOrThrow<MaskResponse>(resp);
  }

  async finalize(sessionId: string): Promise<MaskResponse> {
    const resp = await fetch(
      `${this.baseUrl}/api/sessions/${sessionId}/exemplar/finalize`,
      { method: "POST" },
    );
    return parseOrThrow<MaskResponse>(resp);
  }

  async getMask(sessionId: string): Promise<MaskResponse> {
    const resp = await fetch(`${this.baseUrl}/api/sessions/${sessionId}/mask`);
    return parseOrThrow<MaskResponse>(resp);
  }

  async exportCoco(sessionId: string): Promise<object> {
    const resp = await fetch(`${this.baseUrl}/api/sessions/${sessionId}/export`);
    return parseOrThrow<object>(resp);
  }
}
