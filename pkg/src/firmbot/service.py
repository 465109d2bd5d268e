"""HTTP front door: session management and message exchange over JSON.

One engine instance is shared by all sessions; each session has its own lock
so concurrent posts to the same session are processed one at a time in
arrival order. Idle sessions expire after a configurable TTL.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .dialog import Engine, SessionState

DEFAULT_TTL_SECONDS = 30 * 60


class MessageIn(BaseModel):
    text: str


@dataclass
class SessionEntry:
    state: SessionState
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_access: float = field(default_factory=time.monotonic)


class SessionStore:
    def __init__(self, engine: Engine, ttl_seconds: float = DEFAULT_TTL_SECONDS):
        self.engine = engine
        self.ttl = ttl_seconds
        self._sessions: dict[str, SessionEntry] = {}
        self._lock = threading.Lock()
        self.turn_count = 0
        self.sessions_created = 0

    def create(self) -> str:
        state = self.engine.start_session()
        with self._lock:
            self._sweep()
            self._sessions[state.session_id] = SessionEntry(state=state)
            self.sessions_created += 1
        return state.session_id

    def get(self, session_id: str) -> SessionEntry | None:
        with self._lock:
            entry = self._sessions.get(session_id)
            if entry is None:
                return None
            if time.monotonic() - entry.last_access > self.ttl:
                del self._sessions[session_id]
                return None
            return entry

    def delete(self, session_id: str) -> bool:
        with self._lock:
            return self._sessions.pop(session_id, None) is not None

    def active_count(self) -> int:
        with self._lock:
            self._sweep()
            return len(self._sessions)

    def _sweep(self) -> None:
        now = time.monotonic()
        expired = [sid for sid, e in self._sessions.items() if now - e.last_access > self.ttl]
        for sid in expired:
            del self._sessions[sid]


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"code": code, "message": message}})


def create_app(
    engine: Engine,
    ttl_seconds: float = DEFAULT_TTL_SECONDS,
    admin_token: str | None = None,
) -> FastAPI:
    """Build the API around an already-validated engine.

    Engine construction performs the fail-fast startup checks (manifest
    invariants, response coverage), so by the time an app exists every
    lookup the conversation can reach is known to resolve.
    """
    app = FastAPI(title="firmbot", version="0.1.0")
    store = SessionStore(engine, ttl_seconds=ttl_seconds)
    app.state.store = store

    def check_admin(request: Request) -> JSONResponse | None:
        if admin_token is not None and request.headers.get("x-admin-token") != admin_token:
            return _error(401, "unauthorized", "missing or wrong admin token")
        return None

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/v1/sessions", status_code=201)
    def create_session() -> dict:
        return {"session_id": store.create()}

    @app.post("/v1/sessions/{session_id}/messages")
    def post_message(session_id: str, message: MessageIn):
        entry = store.get(session_id)
        if entry is None:
            return _error(404, "session_not_found", f"no session {session_id!r}")
        with entry.lock:
            entry.last_access = time.monotonic()
            _, response = engine.handle_turn(entry.state, message.text)
            entry.last_access = time.monotonic()
            store.turn_count += 1
        body: dict = {
            "session_id": session_id,
            "messages": response.messages,
            "end_of_flow": response.end_of_flow,
        }
        if response.buttons:
            body["buttons"] = [{"label": label, "value": value} for label, value in response.buttons]
        return body

    @app.delete("/v1/sessions/{session_id}")
    def delete_session(session_id: str) -> Response:
        if not store.delete(session_id):
            return _error(404, "session_not_found", f"no session {session_id!r}")
        return Response(status_code=204)

    @app.get("/v1/admin/stats")
    def stats(request: Request):
        denied = check_admin(request)
        if denied is not None:
            return denied
        return {"sessions": store.active_count(), "turns": store.turn_count}

    @app.get("/v1/admin/sessions/{session_id}")
    def session_debug(session_id: str, request: Request):
        denied = check_admin(request)
        if denied is not None:
            return denied
        entry = store.get(session_id)
        if entry is None:
            return _error(404, "session_not_found", f"no session {session_id!r}")
        with entry.lock:
            state = entry.state
            return {
                "session_id": session_id,
                "filled_slots": dict(state.filled_slots),
                "active_intent": state.active_intent,
                "pending_slot": list(state.pending_slot) if state.pending_slot else None,
                "last_routed_bot": state.last_routed_bot,
                "last_routed_intent": state.last_routed_intent,
                "leads_emitted": state.leads_emitted,
                "turns": len(state.transcript) // 2,
            }

    return app
