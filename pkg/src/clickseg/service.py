"""Session-oriented HTTP/JSON annotation service.

Sessions are append-only event logs on disk (clicks, undo, exemplar
finalization); the current mask is always the fold of the event log from
scratch, which makes replay determinism directly testable. A session
starts in single mode and switches to multi mode exactly once, when the
current mask is frozen as the exemplar.

Mask wire format: COCO-style uncompressed RLE with the counts packed as
little-endian uint32 and base64-wrapped:
    {"size": [h, w], "counts_b64": "..."}
"""

from __future__ import annotations

import base64
import io as stdio
import json
import threading
import time
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Form, UploadFile
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image as PILImage
from scipy import ndimage

from .geometry import POSITIVE, ClickSet, binarize, iou, rle_encode
from .models import ExemplarTarget
from .simulate import FOUR_CONNECTED


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def mask_to_wire(mask: np.ndarray) -> dict:
    rle = rle_encode(mask)
    counts = np.asarray(rle["counts"], dtype="<u4").tobytes()
    return {
        "size": rle["size"],
        "counts_b64": base64.b64encode(counts).decode("ascii"),
    }


def wire_to_mask(wire: dict) -> np.ndarray:
    from .geometry import rle_decode

    counts = np.frombuffer(
        base64.b64decode(wire["counts_b64"]), dtype="<u4"
    ).astype(np.int64)
    return rle_decode({"size": wire["size"], "counts": list(counts)})


class SessionState:
    """Replayed view of one session's event log."""

    def __init__(self, session_id: str, image: np.ndarray, gt=None):
        self.id = session_id
        self.image = image
        self.gt = gt
        self.mode = "single"
        self.single_clicks = ClickSet()
        self.recall_clicks = ClickSet()
        self.exemplar: ExemplarTarget | None = None
        self.mask = np.zeros(image.shape[:2], dtype=bool)
        self.created = time.time()
        self.updated = self.created


class SessionStore:
    """Disk-backed sessions: <dir>/<id>.png + <dir>/<id>.jsonl."""

    def __init__(self, session_dir, single_net, multi_net, max_image_side=256):
        self.dir = Path(session_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.single_net = single_net
        self.multi_net = multi_net
        self.max_image_side = max_image_side
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._model_lock = threading.Lock()
        self._states: dict[str, SessionState] = {}

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def _log_path(self, session_id: str) -> Path:
        return self.dir / f"{session_id}.jsonl"

    def _append(self, session_id: str, event: dict) -> None:
        with open(self._log_path(session_id), "a") as f:
            f.write(json.dumps(event) + "\n")

    def _events(self, session_id: str) -> list[dict]:
        path = self._log_path(session_id)
        if not path.exists():
            raise ServiceError(404, "not_found", f"no session {session_id}")
        return [
            json.loads(line)
            for line in path.read_text().splitlines()
            if line.strip()
        ]

    def list_sessions(self) -> list[dict]:
        out = []
        for path in sorted(self.dir.glob("*.jsonl")):
            events = [
                json.loads(line)
                for line in path.read_text().splitlines()
                if line.strip()
            ]
            n_clicks = sum(1 for e in events if e["type"] == "click") - sum(
                1 for e in events if e["type"] == "undo"
            )
            out.append(
                {
                    "session_id": path.stem,
                    "mode": "multi"
                    if any(e["type"] == "finalize" for e in events)
                    else "single",
                    "clicks": n_clicks,
                }
            )
        return out

    def create(self, image_bytes: bytes, gt_rle: dict | None = None) -> str:
        try:
            with PILImage.open(stdio.BytesIO(image_bytes)) as img:
                arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        except Exception as e:
            raise ServiceError(400, "bad_image", f"undecodable image: {e}") from e
        h, w = arr.shape[:2]
        if h < 16 or w < 16:
            raise ServiceError(400, "bad_image", f"image too small: {h}x{w}")
        if max(h, w) > self.max_image_side:
            raise ServiceError(
                400, "bad_image",
                f"image side {max(h, w)} exceeds limit {self.max_image_side}",
            )
        net_size = self.single_net.config.image_size
        if (h, w) != (net_size, net_size):
            raise ServiceError(
                400, "bad_image",
                f"model expects {net_size}x{net_size} images, got {h}x{w}",
            )
        session_id = uuid.uuid4().hex[:12]
        PILImage.fromarray((arr * 255).round().astype(np.uint8)).save(
            self.dir / f"{session_id}.png"
        )
        self._append(
            session_id,
            {"type": "create", "ts": time.time(), "gt_rle": gt_rle},
        )
        return session_id

    def replay(self, session_id: str) -> SessionState:
        """Fold the event log into a state, re-running the models."""
        events = self._events(session_id)
        if not events or events[0]["type"] != "create":
            raise ServiceError(409, "corrupt_log", "log does not start with create")
        from .data import load_image
        from .geometry import rle_decode

        image = load_image(self.dir / f"{session_id}.png")
        gt = None
        if events[0].get("gt_rle"):
            gt = rle_decode(events[0]["gt_rle"])
        state = SessionState(session_id, image, gt)
        history: list[dict] = []
        for event in events[1:]:
            if event["type"] == "click":
                history.append(event)
            elif event["type"] == "undo":
                if not history:
                    raise ServiceError(409, "empty_history", "nothing to undo")
                history.pop()
            elif event["type"] == "finalize":
                self._replay_clicks(state, history)
                if state.mode != "single":
                    raise ServiceError(409, "already_multi", "already finalized")
                if len(state.single_clicks) == 0:
                    raise ServiceError(409, "no_mask", "no clicks to finalize")
                state.exemplar = ExemplarTarget(
                    mask=state.mask.copy(), clicks=state.single_clicks
                ).freeze()
                state.mode = "multi"
                history = []
        self._replay_clicks(state, history)
        return state

    def _replay_clicks(self, state: SessionState, history: list[dict]) -> None:
        clicks = ClickSet.from_points(
            [(e["row"], e["col"], e["polarity"]) for e in history]
        )
        if state.mode == "single":
            state.single_clicks = clicks
            prev = None
            mask = np.zeros(state.image.shape[:2], dtype=bool)
            with self._model_lock:
                for n in range(1, len(clicks) + 1):
                    partial = ClickSet(list(clicks)[:n])
                    probs = self.single_net.predict(state.image, partial, prev)
                    mask = binarize(probs)
                    prev = mask.astype(np.float32)
            state.mask = mask
        else:
            state.recall_clicks = clicks
            prev = None
            with self._model_lock:
                probs = self.multi_net.predict(
                    state.image, ClickSet(), state.exemplar, None
                )
                mask = binarize(probs)
                prev = mask.astype(np.float32)
                for n in range(1, len(clicks) + 1):
                    partial = ClickSet(list(clicks)[:n])
                    probs = self.multi_net.predict(
                        state.image, partial, state.exemplar, prev
                    )
                    mask = binarize(probs)
                    prev = mask.astype(np.float32)
            state.mask = mask

    def _state(self, session_id: str) -> SessionState:
        if session_id not in self._states:
            self._states[session_id] = self.replay(session_id)
        return self._states[session_id]

    def submit_click(self, session_id: str, row: int, col: int, polarity: str):
        with self._lock(session_id):
            state = self._state(session_id)
            h, w = state.image.shape[:2]
            if not (0 <= row < h and 0 <= col < w):
                raise ServiceError(400, "out_of_bounds", f"({row},{col}) outside {h}x{w}")
            if polarity not in (POSITIVE, "negative"):
                raise ServiceError(400, "bad_polarity", polarity)
            if (
                state.mode == "single"
                and len(state.single_clicks) == 0
                and polarity != POSITIVE
            ):
                raise ServiceError(
                    409, "first_click_negative", "the first click must be positive"
                )
            self._append(
                session_id,
                {"type": "click", "row": row, "col": col, "polarity": polarity},
            )
            # incremental update: one forward pass, identical to the fold
            prev = state.mask.astype(np.float32) if self._has_prediction(state) else None
            with self._model_lock:
                if state.mode == "single":
                    state.single_clicks = state.single_clicks.appended(
                        row, col, polarity
                    )
                    probs = self.single_net.predict(
                        state.image, state.single_clicks, prev
                    )
                else:
                    state.recall_clicks = state.recall_clicks.appended(
                        row, col, polarity
                    )
                    probs = self.multi_net.predict(
                        state.image, state.recall_clicks, state.exemplar, prev
                    )
            state.mask = binarize(probs)
            state.updated = time.time()
            return self._mask_response(state)

    @staticmethod
    def _has_prediction(state: SessionState) -> bool:
        if state.mode == "single":
            return len(state.single_clicks) > 0
        return True  # multi mode always has the round-0 propagation

    def undo(self, session_id: str):
        with self._lock(session_id):
            state = self._state(session_id)
            clicks = (
                state.recall_clicks if state.mode == "multi" else state.single_clicks
            )
            if len(clicks) == 0:
                raise ServiceError(409, "empty_history", "nothing to undo")
            self._append(session_id, {"type": "undo"})
            self._states[session_id] = self.replay(session_id)
            return self._mask_response(self._states[session_id])

    def finalize(self, session_id: str):
        with self._lock(session_id):
            state = self._state(session_id)
            if state.mode == "multi":
                raise ServiceError(409, "already_multi", "already finalized")
            if len(state.single_clicks) == 0:
                raise ServiceError(409, "no_mask", "cannot finalize without a mask")
            self._append(session_id, {"type": "finalize"})
            state.exemplar = ExemplarTarget(
                mask=state.mask.copy(), clicks=state.single_clicks
            ).freeze()
            state.mode = "multi"
            state.recall_clicks = ClickSet()
            with self._model_lock:
                probs = self.multi_net.predict(
                    state.image, ClickSet(), state.exemplar, None
                )
            state.mask = binarize(probs)
            state.updated = time.time()
            return self._mask_response(state)

    def current_mask(self, session_id: str):
        with self._lock(session_id):
            return self._mask_response(self._state(session_id))

    def _mask_response(self, state: SessionState) -> dict:
        out = {
            "session_id": state.id,
            "mode": state.mode,
            "mask": mask_to_wire(state.mask),
            "clicks": (
                state.recall_clicks if state.mode == "multi" else state.single_clicks
            ).to_json(),
        }
        if state.gt is not None:
            out["iou_vs_gt"] = iou(state.mask, state.gt)
        return out

    def export(self, session_id: str) -> dict:
        with self._lock(session_id):
            state = self._state(session_id)
            if state.mode == "single" and len(state.single_clicks) == 0:
                raise ServiceError(409, "empty_session", "nothing to export")
            h, w = state.image.shape[:2]
            annotations = []
            ann_id = 1
            if state.mode == "multi":
                annotations.append(
                    {
                        "id": ann_id,
                        "image_id": 1,
                        "category_id": 1,
                        "segmentation": rle_encode(state.exemplar.mask),
                        "area": int(np.count_nonzero(state.exemplar.mask)),
                        "source": "exemplar",
                    }
                )
                ann_id += 1
                labels, n = ndimage.label(state.mask, structure=FOUR_CONNECTED)
                for comp in range(1, n + 1):
                    m = labels == comp
                    annotations.append(
                        {
                            "id": ann_id,
                            "image_id": 1,
                            "category_id": 1,
                            "segmentation": rle_encode(m),
                            "area": int(m.sum()),
                            "source": "propagated",
                        }
                    )
                    ann_id += 1
            else:
                if not state.mask.any():
                    raise ServiceError(409, "empty_session", "nothing to export")
                annotations.append(
                    {
                        "id": ann_id,
                        "image_id": 1,
                        "category_id": 1,
                        "segmentation": rle_encode(state.mask),
                        "area": int(np.count_nonzero(state.mask)),
                        "source": "single",
                    }
                )
            return {
                "images": [
                    {
                        "id": 1,
                        "height": h,
                        "width": w,
                        "file_name": f"{session_id}.png",
                    }
                ],
                "annotations": annotations,
                "categories": [{"id": 1, "name": "annotated"}],
            }


def create_app(store: SessionStore, static_dir=None) -> FastAPI:
    app = FastAPI(title="clickseg annotation service")
    app.state.store = store

    @app.exception_handler(ServiceError)
    async def _service_error(request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message},
        )

    @app.post("/api/sessions", status_code=201)
    async def create_session(image: UploadFile, gt_rle: str | None = Form(None)):
        gt = json.loads(gt_rle) if gt_rle else None
        session_id = store.create(await image.read(), gt)
        return {"session_id": session_id}

    @app.get("/api/sessions")
    def list_sessions():
        return {"sessions": store.list_sessions()}

    @app.post("/api/sessions/{session_id}/clicks")
    def submit_click(session_id: str, click: dict):
        for key in ("row", "col", "polarity"):
            if key not in click:
                raise ServiceError(400, "bad_request", f"missing {key}")
        return store.submit_click(
            session_id, int(click["row"]), int(click["col"]), click["polarity"]
        )

    @app.delete("/api/sessions/{session_id}/clicks/last")
    def undo_click(session_id: str):
        return store.undo(session_id)

    @app.post("/api/sessions/{session_id}/exemplar/finalize")
    def finalize(session_id: str):
        return store.finalize(session_id)

    @app.get("/api/sessions/{session_id}/mask")
    def get_mask(session_id: str):
        return store.current_mask(session_id)

    @app.get("/api/sessions/{session_id}/export")
    def export(session_id: str):
        return store.export(session_id)

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
