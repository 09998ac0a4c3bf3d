/**
 * End-to-end flow against the real annotation service: create a session,
 * click, undo, freeze the exemplar, refine, and push the export back
 * through the dataset builder.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { once } from "node:events";
import { readFile, mkdtemp, rm } from "node:fs/promises";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/client.js";
import { SessionModel } from "../src/session.js";
import { decodeWireMask } from "../src/wire.js";

const helpers = join(dirname(fileURLToPath(import.meta.url)), "helpers");
const port = 18000 + Math.floor(Math.random() * 2000);
const baseUrl = `http://127.0.0.1:${port}`;

let server: ChildProcess;
let sessionDir: string;
const client = new ApiClient(baseUrl);

async function waitForServer(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${baseUrl}/api/sessions`);
      if (resp.ok) return;
    } catch (err) {
      lastError = err;
    }
    if (server.exitCode !== null) {
      throw new Error(`server exited early with code ${server.exitCode}`);
    }
    await new Promise((r) => setTimeout(r, 500));
  }
  throw new Error(`server not reachable after ${timeoutMs}ms: ${lastError}`);
}

function runValidator(doc: object): Promise<{
  ok: boolean;
  n_annotations: number;
  n_samples: number;
  object_counts: number[];
}> {
  return new Promise((resolve, reject) => {
    const proc = spawn("python3", [join(helpers, "validate_export.py")], {
      stdio: ["pipe", "pipe", "inherit"],
    });
    let out = "";
    proc.stdout.on("data", (chunk) => (out += chunk));
    proc.on("close", (code) => {
      if (code !== 0) reject(new Error(`validator exited with ${code}`));
      else resolve(JSON.parse(out));
    });
    proc.stdin.write(JSON.stringify(doc));
    proc.stdin.end();
  });
}

beforeAll(async () => {
  sessionDir = await mkdtemp(join(tmpdir(), "annotator-e2e-"));
  server = spawn(
    "python3",
    [join(helpers, "serve_fixture.py"), "--port", String(port), "--dir", sessionDir],
    { stdio: ["ignore", "inherit", "inherit"] },
  );
  await waitForServer(240_000);
});

afterAll(async () => {
  if (server && server.exitCode === null) {
    server.kill("SIGTERM");
    await once(server, "exit").catch(() => undefined);
  }
  if (sessionDir) await rm(sessionDir, { recursive: true, force: true });
});

describe("scripted annotation flow", () => {
  let model: SessionModel;
  let maskAfterFirstClick: string;

  it("creates a session from an uploaded PNG", async () => {
    const png = await readFile(join(sessionDir, "sample.png"));
    const sessionId = await client.createSession(new Blob([new Uint8Array(png)]));
    expect(sessionId).toMatch(/^[0-9a-f]{12}$/);
    model = new SessionModel(sessionId);
    const listed = await client.listSessions();
    expect(listed.map((s) => s.session_id)).toContain(sessionId);
  });

  it("server rejects a negative first click; the client model agrees", async () => {
    expect(model.canClick("negative")).toBe(false);
    await expect(client.click(model.sessionId, 5, 5, "negative")).rejects.toMatchObject(
      { status: 409, code: "first_click_negative" } satisfies Partial<ApiError>,
    );
  });

  it("positive clicks return a decodable 32x32 mask", async () => {
    model.applyResponse(await client.click(model.sessionId, 16, 16, "positive"));
    expect(model.mode).toBe("single");
    expect(model.clicks).toHaveLength(1);
    const mask = decodeWireMask(model.mask!);
    expect(mask.height).toBe(32);
    expect(mask.width).toBe(32);
    maskAfterFirstClick = model.mask!.counts_b64;
  });

  it("undo restores the previous mask bit-for-bit", async () => {
    model.applyResponse(await client.click(model.sessionId, 24, 8, "negative"));
    expect(model.clicks).toHaveLength(2);
    model.applyResponse(await client.undo(model.sessionId));
    expect(model.clicks).toHaveLength(1);
    expect(model.mask!.counts_b64).toBe(maskAfterFirstClick);
  });

  it("freezing the exemplar switches to multi mode with empty recall clicks", async () => {
    expect(model.canFinalize()).toBe(true);
    model.applyResponse(await client.finalize(model.sessionId));
    expect(model.mode).toBe("multi");
    expect(model.clicks).toHaveLength(0);
    expect(model.canFinalize()).toBe(false);
    // a negative recall click is legal now
    expect(model.canClick("negative")).toBe(true);
  });

  it("recall clicks refine the propagated mask", async () => {
    model.applyResponse(await client.click(model.sessionId, 26, 26, "positive"));
    model.applyResponse(await client.click(model.sessionId, 4, 28, "negative"));
    expect(model.clicks).toHaveLength(2);
    const current = await client.getMask(model.sessionId);
    expect(current.mask.counts_b64).toBe(model.mask!.counts_b64);
  });

  it("export parses back through the dataset builder", async () => {
    const doc = (await client.exportCoco(model.sessionId)) as {
      images: unknown[];
      annotations: { source: string }[];
      categories: unknown[];
    };
    expect(doc.images).toHaveLength(1);
    expect(doc.annotations.length).toBeGreaterThanOrEqual(1);
    expect(doc.annotations[0]!.source).toBe("exemplar");
    const report = await runValidator(doc);
    expect(report.ok).toBe(true);
    expect(report.n_annotations).toBe(doc.annotations.length);
    if (report.n_annotations >= 2) {
      // exemplar + at least one propagated object form a usable sample
      expect(report.n_samples).toBeGreaterThanOrEqual(1);
      expect(Math.max(...report.object_counts)).toBeGreaterThanOrEqual(2);
    }
  });
});
