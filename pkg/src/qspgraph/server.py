"""Session-scoped HTTP API consumed by the browser workbench.

Endpoints (JSON bodies mirror the domain types' to_json forms):

    POST /sessions                          -> {session_id}
    POST /sessions/{sid}/ingest             {"script": text}
    GET  /sessions/{sid}/state
    POST /sessions/{sid}/edits              {"text": edit script}
    POST /sessions/{sid}/clarifications/{item}/resolve
         {"value": ..., "unit": ..., "accept_default": bool}
    POST /sessions/{sid}/confirm
    GET  /sessions/{sid}/versions/{tag}/graph|script|trajectory|diff
    GET  /sessions/{sid}/modules

Mutating calls on one session are serialized by a per-session lock.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .errors import QspError
from .priors import PriorsKb, default_kb
from .session import Session


def _error_payload(exc: QspError) -> dict:
    payload = exc.payload()
    report = getattr(exc, "report", None)
    if report is not None:
        payload["report"] = report.to_json()
    return payload


class SessionRegistry:
    def __init__(self, root: str | Path, kb: PriorsKb):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.kb = kb
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def create(self) -> str:
        sid = uuid.uuid4().hex[:12]
        with self._registry_lock:
            self._sessions[sid] = Session(self.root / sid, kb=self.kb)
            self._locks[sid] = threading.Lock()
        return sid

    def get(self, sid: str) -> tuple[Session, threading.Lock]:
        with self._registry_lock:
            if sid not in self._sessions:
                path = self.root / sid
                if not path.exists():
                    raise HTTPException(status_code=404, detail=f"unknown session {sid}")
                self._sessions[sid] = Session(path, kb=self.kb)
                self._locks[sid] = threading.Lock()
            return self._sessions[sid], self._locks[sid]


def create_app(root: str | Path = "./qsp_sessions", kb: PriorsKb | None = None) -> FastAPI:
    registry = SessionRegistry(root, kb or default_kb())
    app = FastAPI(title="qspgraph workbench", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(QspError)
    async def qsp_error_handler(_request, exc: QspError):
        return JSONResponse(status_code=409, content=_error_payload(exc))

    @app.post("/sessions")
    def create_session():
        sid = registry.create()
        return {"session_id": sid}

    @app.post("/sessions/{sid}/ingest")
    def ingest(sid: str, body: dict):
        session, lock = registry.get(sid)
        script = body.get("script")
        if not isinstance(script, str):
            raise HTTPException(status_code=422, detail="body must carry a 'script' string")
        with lock:
            state = session.start_understanding(script)
        return state.to_json()

    @app.get("/sessions/{sid}/state")
    def state(sid: str):
        session, _lock = registry.get(sid)
        return session.state.to_json()

    @app.post("/sessions/{sid}/edits")
    def edits(sid: str, body: dict):
        session, lock = registry.get(sid)
        text = body.get("text")
        if not isinstance(text, str):
            raise HTTPException(status_code=422, detail="body must carry a 'text' string")
        with lock:
            return session.submit_edit(text)

    @app.post("/sessions/{sid}/clarifications/{item_id}/resolve")
    def resolve(sid: str, item_id: str, body: dict):
        session, lock = registry.get(sid)
        with lock:
            state = session.resolve(
                item_id,
                value=body.get("value"),
                unit=body.get("unit"),
                accept_default=bool(body.get("accept_default", False)),
            )
        return state.to_json()

    @app.post("/sessions/{sid}/confirm")
    def confirm(sid: str):
        session, lock = registry.get(sid)
        with lock:
            return session.confirm()

    @app.get("/sessions/{sid}/versions/{tag}/graph")
    def version_graph(sid: str, tag: str):
        session, _lock = registry.get(sid)
        return JSONResponse(content=_json_artifact(session, tag, "graph.json"))

    @app.get("/sessions/{sid}/versions/{tag}/script", response_class=PlainTextResponse)
    def version_script(sid: str, tag: str):
        session, _lock = registry.get(sid)
        return session.artifact(tag, f"model_{tag}.m").decode("utf-8")

    @app.get("/sessions/{sid}/versions/{tag}/trajectory", response_class=PlainTextResponse)
    def version_trajectory(sid: str, tag: str):
        session, _lock = registry.get(sid)
        return session.artifact(tag, "trajectory.csv").decode("utf-8")

    @app.get("/sessions/{sid}/versions/{tag}/manifest")
    def version_manifest(sid: str, tag: str):
        session, _lock = registry.get(sid)
        return JSONResponse(content=_json_artifact(session, tag, "plot_manifest.json"))

    @app.get("/sessions/{sid}/versions/{tag}/diff")
    def version_diff(sid: str, tag: str, against: str | None = None):
        session, _lock = registry.get(sid)
        if against is None:
            record = session.store.get_record(tag)
            return record.delta
        return session.diff(against, tag)

    @app.get("/sessions/{sid}/modules")
    def modules(sid: str):
        session, _lock = registry.get(sid)
        return session.modules()

    def _json_artifact(session: Session, tag: str, name: str):
        return json.loads(session.artifact(tag, name).decode("utf-8"))

    return app
