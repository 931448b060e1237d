"""HTTP facade over the enhancement pipeline.

Storage layout under the data directory:
  images/<sha256>.png    content-addressed image bytes (uploads and results)
  results/<id>.json      result id -> image sha pointer
  sessions/<id>.json     append-only session journal

Everything lives on disk, so a restarted process serves existing sessions.
"""

from __future__ import annotations

import hashlib
import json
import re
import secrets
import threading
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from . import __version__, promptparse
from .config import Config
from .imgcore import PNG_MAGIC, ImageIOError, decode_image, encode_image
from .pipeline import EnhanceOptions, EnhanceRequest, MaskSpec, PipelineError, enhance

_IMAGE_ID = re.compile(r"^[0-9a-f]{64}$")
_TOKEN_ID = re.compile(r"^[A-Za-z0-9_-]{1,64}$")


class SessionBody(BaseModel):
    image_id: str


class ParseBody(BaseModel):
    prompt: str


class EnhanceBody(BaseModel):
    prompt: str
    mode: str = "deterministic"
    seed_point: tuple[int, int] | None = None
    mask_id: str | None = None
    ratio_override: float | None = None
    seed: int | None = None
    eta: float = 0.0


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _error(status: int, message: str, **extra) -> JSONResponse:
    body = {"error": message}
    body.update({k: v for k, v in extra.items() if v is not None})
    return JSONResponse(status_code=status, content=body)


class _Store:
    """Disk-backed state; every read goes to disk so restarts are invisible."""

    def __init__(self, data_dir: str | Path) -> None:
        self.root = Path(data_dir)
        self.images = self.root / "images"
        self.results = self.root / "results"
        self.sessions = self.root / "sessions"
        for d in (self.images, self.results, self.sessions):
            d.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def lock_for(self, session_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(session_id, threading.Lock())

    # images

    def put_image(self, data: bytes) -> str:
        image_id = hashlib.sha256(data).hexdigest()
        path = self.images / f"{image_id}.png"
        if not path.exists():
            path.write_bytes(data)
        return image_id

    def image_path(self, image_id: str) -> Path | None:
        if not _IMAGE_ID.match(image_id):
            return None
        path = self.images / f"{image_id}.png"
        return path if path.exists() else None

    # results

    def put_result(self, image_id: str, session_id: str) -> str:
        while True:
            result_id = secrets.token_urlsafe(9)
            path = self.results / f"{result_id}.json"
            if not path.exists():
                break
        path.write_text(
            json.dumps({"image_id": image_id, "session_id": session_id})
        )
        return result_id

    def result_image_id(self, result_id: str) -> str | None:
        if not _TOKEN_ID.match(result_id):
            return None
        path = self.results / f"{result_id}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())["image_id"]

    # sessions

    def new_session(self, image_id: str) -> dict:
        while True:
            session_id = secrets.token_urlsafe(9)
            if not (self.sessions / f"{session_id}.json").exists():
                break
        journal = {
            "id": session_id,
            "base_image_id": image_id,
            "created": _now(),
            "updated": _now(),
            "history": [],
        }
        self.save_session(journal)
        return journal

    def load_session(self, session_id: str) -> dict | None:
        if not _TOKEN_ID.match(session_id):
            return None
        path = self.sessions / f"{session_id}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def save_session(self, journal: dict) -> None:
        path = self.sessions / f"{journal['id']}.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(journal, indent=2))
        tmp.replace(path)


def create_app(
    data_dir: str | Path,
    max_bytes: int = 4 * 1024 * 1024,
    queue_mode: str = "queue",
    cors_origin: str | None = None,
    settings: Config | None = None,
) -> FastAPI:
    if queue_mode not in ("queue", "reject"):
        raise ValueError(f"queue_mode must be 'queue' or 'reject', got {queue_mode!r}")
    cfg = settings if settings is not None else Config()
    vocab = (
        promptparse.VocabularyTable.from_json(cfg.vocab_path)
        if cfg.vocab_path
        else None
    )
    store = _Store(data_dir)
    app = FastAPI(title="lumactl", version=__version__)
    app.state.store = store
    if cors_origin:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=[o.strip() for o in cors_origin.split(",")],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(RequestValidationError)
    async def _on_bad_body(request: Request, exc: RequestValidationError):
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"] if p != "body")
        return _error(400, f"{where or 'body'}: {first['msg']}")

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/v1/images", status_code=201)
    async def upload_image(request: Request):
        data = await request.body()
        if len(data) > max_bytes:
            return _error(413, f"image exceeds the {max_bytes} byte cap")
        if data[: len(PNG_MAGIC)] != PNG_MAGIC:
            return _error(400, "body must be a PNG stream")
        try:
            decode_image(data)
        except ImageIOError as exc:
            return _error(400, str(exc))
        return {"image_id": store.put_image(data)}

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: SessionBody):
        if store.image_path(body.image_id) is None:
            return _error(404, f"unknown image id {body.image_id!r}")
        journal = store.new_session(body.image_id)
        return {"session_id": journal["id"]}

    @app.post("/v1/sessions/{session_id}/parse")
    def parse_preview(session_id: str, body: ParseBody):
        if store.load_session(session_id) is None:
            return _error(404, f"unknown session id {session_id!r}")
        try:
            instruction = promptparse.parse(body.prompt, vocab)
        except promptparse.ParseError as exc:
            return _error(400, str(exc), kind=exc.kind, span=exc.span)
        return {"instruction": instruction.to_dict()}

    @app.post("/v1/sessions/{session_id}/enhance")
    def run_enhance(session_id: str, body: EnhanceBody):
        journal = store.load_session(session_id)
        if journal is None:
            return _error(404, f"unknown session id {session_id!r}")
        lock = store.lock_for(session_id)
        if not lock.acquire(blocking=queue_mode == "queue"):
            return _error(409, "an edit is already running for this session")
        try:
            return _run_enhance_locked(session_id, body)
        finally:
            lock.release()

    def _run_enhance_locked(session_id: str, body: EnhanceBody):
        # the journal may have grown while we waited on the lock
        journal = store.load_session(session_id)
        if journal["history"]:
            source_id = store.result_image_id(journal["history"][-1]["result_id"])
        else:
            source_id = journal["base_image_id"]
        image_bytes = (store.images / f"{source_id}.png").read_bytes()
        image = decode_image(image_bytes)

        if body.seed_point is not None and body.mask_id is not None:
            return _error(400, "seed_point and mask_id are mutually exclusive")
        if body.mask_id is not None:
            mask_path = store.image_path(body.mask_id)
            if mask_path is None:
                return _error(404, f"unknown image id {body.mask_id!r}")
            mask = MaskSpec("file", path=str(mask_path))
        else:
            point = tuple(body.seed_point) if body.seed_point else None
            mask = MaskSpec("heuristic", seed_point=point)

        seed = body.seed if body.seed is not None else secrets.randbits(32)
        try:
            options = EnhanceOptions(
                mode=body.mode,
                smooth_sigma=cfg.tbc_sigma,
                eta=body.eta,
                seed=seed,
                ratio_override=body.ratio_override,
                schedule_t=cfg.schedule_t,
                beta_start=cfg.beta_start,
                beta_end=cfg.beta_end,
                retinex_lambda=cfg.retinex_lambda,
                vocabulary=vocab,
            )
            out, report = enhance(
                EnhanceRequest(image=image, prompt=body.prompt, mask=mask, options=options)
            )
        except PipelineError as exc:
            return _error(400, str(exc), stage=exc.stage, kind=exc.kind, span=exc.span)
        except ValueError as exc:
            return _error(400, str(exc))

        image_id = store.put_image(encode_image(out))
        result_id = store.put_result(image_id, session_id)
        entry = {
            "prompt": body.prompt,
            # everything needed to replay this edit from its predecessor
            "request": {
                "mode": body.mode,
                "seed": seed,
                "eta": body.eta,
                "seed_point": list(body.seed_point) if body.seed_point else None,
                "mask_id": body.mask_id,
                "ratio_override": body.ratio_override,
            },
            "instruction": report.instruction.to_dict(),
            "result_id": result_id,
            "report": report.to_dict(),
        }
        journal["history"].append(entry)
        journal["updated"] = _now()
        store.save_session(journal)
        return {
            "result_id": result_id,
            "instruction": entry["instruction"],
            "report": entry["report"],
        }

    @app.get("/v1/results/{result_id}/image")
    def result_image(result_id: str):
        image_id = store.result_image_id(result_id)
        if image_id is None:
            return _error(404, f"unknown result id {result_id!r}")
        data = (store.images / f"{image_id}.png").read_bytes()
        return Response(content=data, media_type="image/png")

    @app.get("/v1/sessions/{session_id}/history")
    def session_history(session_id: str):
        journal = store.load_session(session_id)
        if journal is None:
            return _error(404, f"unknown session id {session_id!r}")
        return journal["history"]

    return app
