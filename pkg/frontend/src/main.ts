/**
 * Canvas annotator: upload an image, left-click to add positive clicks,
 * right-click for negatives, undo, freeze the exemplar to switch to
 * propagation mode, refine with recall clicks, export COCO JSON.
 * Wheel zooms around the cursor; drag with the middle button (or while
 * holding space) pans.
 */

import { ApiClient, ApiError } from "./client.js";
import { maskToRgba } from "./overlay.js";
import { markerColor, SessionModel } from "./session.js";
import type { Polarity } from "./session.js";
import {
  canvasClickToPixel,
  fitImage,
  pan,
  pixelCenterToCanvas,
  zoomAt,
} from "./viewport.js";
import type { Viewport } from "./viewport.js";
import { decodeWireMask } from "./wire.js";

const client = new ApiClient("");

const canvas = document.getElementById("canvas") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const fileInput = document.getElementById("file") as HTMLInputElement;
const undoBtn = document.getElementById("undo") as HTMLButtonElement;
const finalizeBtn = document.getElementById("finalize") as HTMLButtonElement;
const exportBtn = document.getElementById("export") as HTMLButtonElement;
const statusEl = document.getElementById("status") as HTMLElement;

let model: SessionModel | null = null;
let image: HTMLImageElement | null = null;
let viewport: Viewport = { scale: 1, offsetX: 0, offsetY: 0 };
let spaceHeld = false;
let dragging: { x: number; y: number } | null = null;

function setStatus(text: string) {
  statusEl.textContent = text;
}

function refreshButtons() {
  undoBtn.disabled = !model?.canUndo();
  finalizeBtn.disabled = !model?.canFinalize();
  exportBtn.disabled = !model?.canExport();
}

function draw() {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!image) return;
  ctx.imageSmoothingEnabled = viewport.scale < 4;
  ctx.drawImage(
    image,
    viewport.offsetX,
    viewport.offsetY,
    image.naturalWidth * viewport.scale,
    image.naturalHeight * viewport.scale,
  );
  if (model?.mask) {
    const decoded = decodeWireMask(model.mask);
    const rgba = maskToRgba(decoded);
    const off = document.createElement("canvas");
    off.width = decoded.width;
    off.height = decoded.height;
    off.getContext("2d")!.putImageData(
      new ImageData(rgba, decoded.width, decoded.height),
      0,
      0,
    );
    ctx.drawImage(
      off,
      viewport.offsetX,
      viewport.offsetY,
      decoded.width * viewport.scale,
      decoded.height * viewport.scale,
    );
  }
  for (const click of model?.clicks ?? []) {
    const { x, y } = pixelCenterToCanvas(viewport, click);
    ctx.beginPath();
    ctx.arc(x, y, 5, 0, 2 * Math.PI);
    ctx.fillStyle = markerColor(click.polarity);
    ctx.fill();
    ctx.strokeStyle = "white";
    ctx.lineWidth = 1.5;
    ctx.stroke();
  }
}

async function submitClick(canvasX: number, canvasY: number, polarity: Polarity) {
  if (!model || !image) return;
  if (!model.canClick(polarity)) {
    setStatus("the first click must be positive");
    return;
  }
  const pixel = canvasClickToPixel(
    viewport,
    canvasX,
    canvasY,
    image.naturalHeight,
    image.naturalWidth,
  );
  if (!pixel) return;
  try {
    model.applyResponse(await client.click(model.sessionId, pixel.row, pixel.col, polarity));
    setStatus(
      `${model.mode} mode, ${model.clicks.length} click(s)` +
        (model.iouVsGt != null ? `, IoU ${model.iouVsGt.toFixed(3)}` : ""),
    );
  } catch (err) {
    setStatus(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
  }
  refreshButtons();
  draw();
}

canvas.addEventListener("mousedown", (ev) => {
  if (ev.button === 1 || spaceHeld) {
    dragging = { x: ev.offsetX, y: ev.offsetY };
    ev.preventDefault();
  }
});

canvas.addEventListener("mousemove", (ev) => {
  if (dragging) {
    viewport = pan(viewport, ev.offsetX - dragging.x, ev.offsetY - dragging.y);
    dragging = { x: ev.offsetX, y: ev.offsetY };
    draw();
  }
});

canvas.addEventListener("mouseup", (ev) => {
  if (dragging) {
    dragging = null;
    return;
  }
  if (ev.button === 0) void submitClick(ev.offsetX, ev.offsetY, "positive");
});

canvas.addEventListener("contextmenu", (ev) => {
  ev.preventDefault();
  void submitClick(ev.offsetX, ev.offsetY, "negative");
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  viewport = zoomAt(viewport, ev.offsetX, ev.offsetY, ev.deltaY < 0 ? 1.2 : 1 / 1.2);
  draw();
});

window.addEventListener("keydown", (ev) => {
  if (ev.code === "Space") spaceHeld = true;
});
window.addEventListener("keyup", (ev) => {
  if (ev.code === "Space") spaceHeld = false;
});

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  try {
    const sessionId = await client.createSession(file);
    model = new SessionModel(sessionId);
    image = new Image();
    image.onload = () => {
      viewport = fitImage(canvas.width, canvas.height, image!.naturalWidth, image!.naturalHeight);
      draw();
    };
    image.src = URL.createObjectURL(file);
    setStatus(`session ${sessionId} — click the object`);
  } catch (err) {
    setStatus(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
  }
  refreshButtons();
});

undoBtn.addEventListener("click", async () => {
  if (!model) return;
  try {
    model.applyResponse(await client.undo(model.sessionId));
    setStatus(`undid last click (${model.clicks.length} left)`);
  } catch (err) {
    setStatus(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
  }
  refreshButtons();
  draw();
});

finalizeBtn.addEventListener("click", async () => {
  if (!model) return;
  try {
    model.applyResponse(await client.finalize(model.sessionId));
    setStatus("exemplar frozen — propagated to matching objects; refine with clicks");
  } catch (err) {
    setStatus(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
  }
  refreshButtons();
  draw();
});

exportBtn.addEventListener("click", async () => {
  if (!model) return;
  try {
    const coco = await client.exportCoco(model.sessionId);
    const blob = new Blob([JSON.stringify(coco, null, 2)], {
      type: "application/json",
    });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = `${model.sessionId}.json`;
    a.click();
    setStatus("exported COCO annotations");
  } catch (err) {
    setStatus(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
  }
});

refreshButtons();
setStatus("choose an image to start");
