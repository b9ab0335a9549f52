"""WebSocket front end for the session service.

One socket per conversation.  The first client frame must be a ``start``
message carrying the protocol version; afterwards every frame is passed to
the session manager and the resulting server messages are sent back in
order.  Schema violations answer with an ``error`` frame and keep the
socket open; protocol violations are already answered by the manager with
a recoverable ``protocol_error`` frame.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .errors import DuplicateActiveSession, SchemaError, UnknownSession
from .iff import parse_iff
from .session import PROTO_VERSION, SessionManager


def create_app(manager: SessionManager) -> FastAPI:
    app = FastAPI(title="xpchat", version=PROTO_VERSION)
    app.state.manager = manager

    @app.get("/health")
    def health():
        return {"status": "ok", "proto_version": PROTO_VERSION}

    @app.websocket("/ws")
    async def ws_endpoint(socket: WebSocket):
        await socket.accept()
        session_id = None
        try:
            while True:
                raw = await socket.receive_text()
                try:
                    message = json.loads(raw)
                except ValueError:
                    await socket.send_json({"type": "error",
                                            "payload": {"message": "malformed JSON"}})
                    continue
                if session_id is None:
                    session_id = await _handshake(socket, manager, message)
                    continue
                try:
                    replies = manager.handle_client_message(session_id, message)
                except (SchemaError, UnknownSession) as exc:
                    await socket.send_json({"type": "error",
                                            "payload": {"message": str(exc)}})
                    continue
                for reply in replies:
                    await socket.send_json(reply)
        except WebSocketDisconnect:
            pass

    return app


async def _handshake(socket: WebSocket, manager: SessionManager, message) -> str | None:
    if not isinstance(message, dict) or message.get("type") != "start":
        await socket.send_json({"type": "error",
                                "payload": {"message": "expected a start message"}})
        return None
    payload = message.get("payload", {})
    version = str(payload.get("proto_version", ""))
    if version != PROTO_VERSION:
        await socket.send_json({"type": "version_mismatch",
                                "payload": {"server": PROTO_VERSION, "client": version}})
        return None
    participant = payload.get("participant_id", "")
    assignment = payload.get("assignment", "random")
    if manager.group_mode.lower() in ("a", "b"):
        assignment = manager.group_mode.upper()
    try:
        info, messages = manager.start_session(participant, assignment=assignment)
    except (SchemaError, DuplicateActiveSession) as exc:
        await socket.send_json({"type": "error", "payload": {"message": str(exc)}})
        return None
    await socket.send_json(info)
    for reply in messages:
        await socket.send_json(reply)
    return info["payload"]["session_id"]


def build_manager(iff_path: str | Path, data_dir: str | Path, group: str = "random",
                  seed: int = 0, estimated_minutes: float = 15.0) -> SessionManager:
    graph = parse_iff(Path(iff_path).read_text())
    manager = SessionManager(graph, data_dir, seed=seed,
                             estimated_minutes=estimated_minutes)
    manager.group_mode = group
    return manager
