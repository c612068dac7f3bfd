"""HTTP coordination service wrapping FieldSession.

Thin by design: every route parses JSON, calls one engine method under
the session's own lock, and serializes the result.  All behavior worth
testing lives in the engine, so the wire layer stays honest about the
serialized-ingestion guarantee.
"""

from __future__ import annotations

import secrets
import threading
from pathlib import Path
from typing import Optional

import uvicorn
from fastapi import Body, FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from .errors import (
    FieldswarmError,
    NotFoundError,
    OutOfFieldError,
    SessionError,
    ValidationError,
)
from .session import FieldReading, FieldSession, SessionConfig, SessionEvent

_FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>fieldswarm</title></head>
<body><h1>fieldswarm coordinator</h1>
<p>The operator UI bundle is not built. Run <code>npm install &amp;&amp; npm run build</code>
inside <code>frontend/</code>, then restart the server.</p></body></html>
"""


def default_ui_dir() -> Path:
    # src/fieldswarm/server.py -> repository root -> frontend/dist
    return Path(__file__).resolve().parents[2] / "frontend" / "dist"


class SessionRegistry:
    """All live sessions plus their event-log writers."""

    def __init__(self, log_dir: Optional[Path] = None):
        self._lock = threading.Lock()
        self._sessions: dict[str, FieldSession] = {}
        self.log_dir = Path(log_dir) if log_dir is not None else None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)

    def _sink_for(self, session_id: str):
        if self.log_dir is None:
            return None
        path = self.log_dir / f"{session_id}.jsonl"

        def sink(event: SessionEvent) -> None:
            import json

            with open(path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event.to_record()) + "\n")

        return sink

    def create(self, config: SessionConfig) -> FieldSession:
        session_id = secrets.token_hex(6)
        session = FieldSession(
            config, session_id=session_id, event_sink=self._sink_for(session_id)
        )
        with self._lock:
            self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> FieldSession:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"unknown session {session_id!r}")
        return session


def create_app(
    log_dir=None, ui_dir=None, registry: Optional[SessionRegistry] = None
) -> FastAPI:
    app = FastAPI(title="fieldswarm coordinator")
    app.state.registry = registry if registry is not None else SessionRegistry(log_dir)

    @app.exception_handler(FieldswarmError)
    async def _on_error(request: Request, exc: FieldswarmError):
        status = 400
        if isinstance(exc, NotFoundError):
            status = 404
        elif isinstance(exc, OutOfFieldError):
            body = {"error": str(exc)}
            directive = getattr(exc, "directive", None)
            if directive is not None:
                body["directive"] = directive.to_payload()
            return JSONResponse(body, status_code=422)
        elif isinstance(exc, SessionError):
            status = 409
        elif isinstance(exc, ValidationError):
            status = 422
        return JSONResponse({"error": str(exc)}, status_code=status)

    @app.post("/api/sessions")
    def create_session(payload: dict = Body(...)):
        config = SessionConfig.from_mapping(payload)
        session = app.state.registry.create(config)
        return {
            "session_id": session.session_id,
            "join_url": f"/?session={session.session_id}",
        }

    @app.post("/api/sessions/{sid}/agents")
    def join(sid: str):
        session = app.state.registry.get(sid)
        agent_id, directive = session.join()
        return {"agent_id": agent_id, "directive": directive.to_payload()}

    @app.post("/api/sessions/{sid}/agents/{aid}/fix")
    def report_fix(sid: str, aid: str, payload: dict = Body(...)):
        session = app.state.registry.get(sid)
        directive = session.report_fix(
            aid,
            lat=float(payload["lat"]),
            lon=float(payload["lon"]),
            accuracy_m=float(payload.get("accuracy_m", 0.0)),
        )
        return {"directive": directive.to_payload()}

    @app.post("/api/sessions/{sid}/agents/{aid}/reading")
    def submit_reading(sid: str, aid: str, payload: dict = Body(...)):
        session = app.state.registry.get(sid)
        reading = FieldReading(
            agent_id=aid,
            lat=float(payload["lat"]),
            lon=float(payload["lon"]),
            accuracy_m=float(payload.get("accuracy_m", 0.0)),
            vwc=float(payload["vwc"]),
            ec=None if payload.get("ec") is None else float(payload["ec"]),
            temp_c=None if payload.get("temp_c") is None else float(payload["temp_c"]),
            client_ts=(
                None if payload.get("client_ts") is None else float(payload["client_ts"])
            ),
            token=str(payload["token"]),
        )
        return {"directive": session.submit_reading(reading)}

    @app.get("/api/sessions/{sid}/state")
    def get_state(sid: str):
        return app.state.registry.get(sid).state()

    ui_path = Path(ui_dir) if ui_dir is not None else default_ui_dir()
    if ui_path.is_dir() and (ui_path / "index.html").is_file():
        app.mount("/", StaticFiles(directory=ui_path, html=True), name="ui")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index():
            return _FALLBACK_PAGE

    return app


class BackgroundServer:
    """Uvicorn on a private thread; for tests and the operator simulator."""

    def __init__(self, app: FastAPI, host: str = "127.0.0.1", port: int = 0):
        config = uvicorn.Config(app, host=host, port=port, log_level="warning")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)
        self.host = host

    def __enter__(self) -> "BackgroundServer":
        self.thread.start()
        while not self.server.started:
            if not self.thread.is_alive():
                raise RuntimeError("server thread died during startup")
            threading.Event().wait(0.01)
        return self

    @property
    def port(self) -> int:
        return self.server.servers[0].sockets[0].getsockname()[1]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def __exit__(self, *exc_info) -> None:
        self.server.should_exit = True
        self.thread.join(timeout=10)


def serve(port: int = 8000, host: str = "0.0.0.0", log_dir=None, ui_dir=None) -> None:
    """Blocking entry point used by the CLI."""
    app = create_app(log_dir=log_dir, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
