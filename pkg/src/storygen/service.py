"""Session-based HTTP API for interactive branching story generation.

Sessions live in memory as chains of immutable story states, so branching
at any earlier frame is a constant-time copy of a prefix. Generation is
synchronous; a second extend on a busy session gets an explicit 409.
"""

from __future__ import annotations

import base64
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import torch
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .images import array_to_png_bytes
from .pipeline.checkpoint import CheckpointBundle, load_checkpoint
from .pipeline.sampling import (
    StorySession,
    bundle_fingerprint,
    extend_story,
    new_session,
)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class SessionRecord:
    id: str
    checkpoint_id: str
    seed: int
    history: list[StorySession]  # history[k] holds exactly k frames
    created_at: str
    parent_id: str | None = None
    branch_point: int | None = None
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def session(self) -> StorySession:
        return self.history[-1]


def _frame_payload(session: StorySession, index: int) -> dict:
    png = array_to_png_bytes(session.frames[index])
    return {
        "index": index,
        "sentence": session.sentences[index],
        "image_base64": base64.b64encode(png).decode("ascii"),
    }


class StoryService:
    """All session state and operations; the HTTP layer is a thin shim."""

    def __init__(
        self,
        bundle: CheckpointBundle,
        checkpoint_id: str = "default",
        snapshot_dir: str | Path | None = None,
    ):
        self.bundle = bundle
        self.checkpoint_id = checkpoint_id
        self.records: dict[str, SessionRecord] = {}
        self._registry_lock = threading.Lock()
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir else None
        if self.snapshot_dir:
            self.snapshot_dir.mkdir(parents=True, exist_ok=True)
            self._restore_snapshots()

    # -- session registry ---------------------------------------------------

    def _register(self, record: SessionRecord) -> SessionRecord:
        with self._registry_lock:
            self.records[record.id] = record
        self._snapshot(record)
        return record

    def _get(self, session_id: str) -> SessionRecord:
        record = self.records.get(session_id)
        if record is None:
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        return record

    def _check_checkpoint(self, checkpoint_id: str | None) -> str:
        wanted = checkpoint_id or self.checkpoint_id
        if wanted != self.checkpoint_id:
            raise ApiError(
                404, "unknown_checkpoint", f"checkpoint {wanted!r} is not loaded"
            )
        return wanted

    # -- operations ----------------------------------------------------------

    def create_session(self, checkpoint_id: str | None, seed: int) -> SessionRecord:
        ckpt = self._check_checkpoint(checkpoint_id)
        record = SessionRecord(
            id=uuid.uuid4().hex[:12],
            checkpoint_id=ckpt,
            seed=seed,
            history=[new_session(self.bundle, seed)],
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        return self._register(record)

    def extend_session(self, session_id: str, sentence: str) -> dict:
        record = self._get(session_id)
        if not isinstance(sentence, str) or not sentence.strip():
            raise ApiError(400, "invalid_sentence", "sentence must be non-empty")
        if not record.lock.acquire(blocking=False):
            raise ApiError(
                409, "busy", f"session {session_id!r} is generating a frame"
            )
        try:
            session = extend_story(record.session, sentence, self.bundle)
            record.history.append(session)
        except ValueError as err:
            raise ApiError(400, "invalid_sentence", str(err)) from err
        finally:
            record.lock.release()
        self._snapshot(record)
        return _frame_payload(session, len(session.frames) - 1)

    def branch_session(self, session_id: str, at: int) -> SessionRecord:
        record = self._get(session_id)
        length = len(record.session.frames)
        if not isinstance(at, int) or not 0 <= at <= length:
            raise ApiError(
                400,
                "invalid_branch_point",
                f"branch point must be in [0, {length}], got {at!r}",
            )
        child = SessionRecord(
            id=uuid.uuid4().hex[:12],
            checkpoint_id=record.checkpoint_id,
            seed=record.seed,
            history=list(record.history[: at + 1]),
            created_at=datetime.now(timezone.utc).isoformat(),
            parent_id=record.id,
            branch_point=at,
        )
        return self._register(child)

    def get_session(self, session_id: str) -> dict:
        record = self._get(session_id)
        session = record.session
        return {
            "id": record.id,
            "checkpoint": record.checkpoint_id,
            "created_at": record.created_at,
            "parent": (
                {"id": record.parent_id, "at": record.branch_point}
                if record.parent_id
                else None
            ),
            "length": len(session.frames),
            "frames": [
                _frame_payload(session, i) for i in range(len(session.frames))
            ],
        }

    # -- persistence ---------------------------------------------------------

    def _snapshot(self, record: SessionRecord) -> None:
        if not self.snapshot_dir:
            return
        blob = {
            "id": record.id,
            "checkpoint_id": record.checkpoint_id,
            "seed": record.seed,
            "created_at": record.created_at,
            "parent_id": record.parent_id,
            "branch_point": record.branch_point,
            "history": record.history,
        }
        tmp = self.snapshot_dir / f"{record.id}.pt.tmp"
        torch.save(blob, tmp)
        tmp.rename(self.snapshot_dir / f"{record.id}.pt")
        session = record.session
        for i in range(len(session.frames)):
            png_path = self.snapshot_dir / f"{record.id}_frame_{i}.png"
            if not png_path.exists():
                png_path.write_bytes(array_to_png_bytes(session.frames[i]))

    def _restore_snapshots(self) -> None:
        wanted = bundle_fingerprint(self.bundle)
        for path in sorted(self.snapshot_dir.glob("*.pt")):
            # session payloads hold tensors and dataclasses, not just weights
            blob = torch.load(path, map_location="cpu", weights_only=False)
            if blob["history"][-1].fingerprint != wanted:
                continue
            record = SessionRecord(
                id=blob["id"],
                checkpoint_id=blob["checkpoint_id"],
                seed=blob["seed"],
                history=blob["history"],
                created_at=blob["created_at"],
                parent_id=blob["parent_id"],
                branch_point=blob["branch_point"],
            )
            self.records[record.id] = record


class CreateSessionBody(BaseModel):
    checkpoint: str | None = None
    seed: int = 0


class ExtendBody(BaseModel):
    sentence: str


class BranchBody(BaseModel):
    at: int


def create_app(
    bundle: CheckpointBundle,
    checkpoint_id: str = "default",
    snapshot_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="story service")
    # the browser studio is served from its own origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    service = StoryService(bundle, checkpoint_id, snapshot_dir)
    app.state.service = service

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, err: ApiError):
        return JSONResponse(
            status_code=err.status,
            content={"code": err.code, "message": err.message},
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "checkpoint": service.checkpoint_id}

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        record = service.create_session(body.checkpoint, body.seed)
        return {"id": record.id}

    @app.post("/sessions/{session_id}/frames")
    def extend_session(session_id: str, body: ExtendBody):
        return service.extend_session(session_id, body.sentence)

    @app.post("/sessions/{session_id}/branch")
    def branch_session(session_id: str, body: BranchBody):
        record = service.branch_session(session_id, body.at)
        return {"id": record.id}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return service.get_session(session_id)

    return app


def serve(
    ckpt: str | Path,
    port: int = 8000,
    host: str = "127.0.0.1",
    snapshot_dir: str | Path | None = None,
) -> None:
    """Load a checkpoint and block serving HTTP."""
    import uvicorn

    bundle = load_checkpoint(ckpt)
    app = create_app(bundle, checkpoint_id=Path(ckpt).stem, snapshot_dir=snapshot_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
