"""Transport bindings: asyncio TCP (JSON lines) and WebSocket (FastAPI).

Both bindings speak the same wire schema and drive the same `ServerCore`
through one `Channel` abstraction, so a browser over websockets and a
headless harness over TCP hit identical logic.

Per-session ordering: the event loop serializes `ServerCore.handle`
calls (they never await), and a per-session send lock keeps multi-
message replies contiguous even when an advisor reply lands from a
background task. One active connection per session: a newer connection
supersedes the older one, which is told why and closed.
"""

from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from .assistant import ScriptedOracleAdvisor, RemoteAdvisor, run_advisor_with_deadline
from .errors import ProtocolError
from .protocol import (
    MSG_ERROR,
    MSG_HELLO,
    PROTOCOL_VERSION,
    WireMessage,
    decode_message,
    encode_message,
)
from .server import AdvisorCall, HEARTBEAT_INTERVAL_MS, HEARTBEATS_MISSED_FOR_IDLE, Outgoing, ServerCore

logger = logging.getLogger(__name__)


class Channel:
    """One bidirectional connection; bindings adapt their transport."""

    async def send_text(self, data: str) -> None:
        raise NotImplementedError

    async def recv_text(self) -> str | None:
        """Next inbound message, or None when the peer went away."""
        raise NotImplementedError

    async def close(self) -> None:
        raise NotImplementedError


class TcpChannel(Channel):
    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.reader = reader
        self.writer = writer

    async def send_text(self, data: str) -> None:
        self.writer.write(data.encode("utf-8") + b"\n")
        await self.writer.drain()

    async def recv_text(self) -> str | None:
        try:
            line = await self.reader.readline()
        except (ConnectionError, asyncio.IncompleteReadError):
            return None
        if not line:
            return None
        return line.decode("utf-8", errors="replace")

    async def close(self) -> None:
        try:
            self.writer.close()
            await self.writer.wait_closed()
        except (ConnectionError, OSError):
            pass


@dataclass
class _Connection:
    channel: Channel
    session_id: str | None = None
    out_seq: int = 0
    last_in_seq: int = -1
    last_received_ms: float = 0.0
    send_lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    closed: bool = False

    async def send(self, messages: list[Outgoing]) -> None:
        async with self.send_lock:
            for out in messages:
                self.out_seq += 1
                wire = WireMessage(
                    type=out.type, session=self.session_id, seq=self.out_seq, payload=out.payload
                )
                await self.channel.send_text(encode_message(wire).decode("utf-8"))


class NetServer:
    """Owns a ServerCore plus connection registry, save worker, advisor
    dispatch, and heartbeat sweeping."""

    def __init__(self, core: ServerCore, *, heartbeat_interval_ms: float = HEARTBEAT_INTERVAL_MS):
        self.core = core
        self.heartbeat_interval_ms = heartbeat_interval_ms
        self._by_session: dict[str, _Connection] = {}
        self._save_kick = asyncio.Event()
        self._tasks: list[asyncio.Task] = []
        self._servers: list[asyncio.AbstractServer] = []
        self._stopping = False

    # --- lifecycle ---

    async def start_tcp(self, host: str, port: int) -> tuple[str, int]:
        server = await asyncio.start_server(self._tcp_client, host, port)
        self._servers.append(server)
        sock = server.sockets[0].getsockname()
        self._ensure_workers()
        logger.info("tcp listening on %s:%s", sock[0], sock[1])
        return sock[0], sock[1]

    def _ensure_workers(self) -> None:
        if not self._tasks:
            self._tasks.append(asyncio.create_task(self._save_worker()))
            self._tasks.append(asyncio.create_task(self._heartbeat_sweeper()))

    async def stop(self) -> None:
        self._stopping = True
        for server in self._servers:
            server.close()
            await server.wait_closed()
        for conn in list(self._by_session.values()):
            await conn.channel.close()
        for task in self._tasks:
            task.cancel()
        await asyncio.gather(*self._tasks, return_exceptions=True)
        self._tasks.clear()
        self.core.flush_saves()

    # --- connection handling ---

    async def _tcp_client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        await self.serve_channel(TcpChannel(reader, writer))

    async def serve_channel(self, channel: Channel) -> None:
        conn = _Connection(channel=channel, last_received_ms=time.monotonic() * 1000.0)
        try:
            await self._channel_loop(conn)
        except (ConnectionError, asyncio.IncompleteReadError):
            pass  # peer went away; the session stays resumable
        except Exception:
            logger.exception("connection loop failed")
        finally:
            conn.closed = True
            if conn.session_id and self._by_session.get(conn.session_id) is conn:
                del self._by_session[conn.session_id]
            await channel.close()

    async def _channel_loop(self, conn: _Connection) -> None:
        while not self._stopping:
            raw = await conn.channel.recv_text()
            if raw is None:
                return
            conn.last_received_ms = time.monotonic() * 1000.0
            try:
                msg = decode_message(raw)
            except ProtocolError as exc:
                await conn.send([Outgoing(MSG_ERROR, {"code": exc.code, "message": str(exc)})])
                return  # malformed framing: close
            if msg.seq <= conn.last_in_seq:
                await conn.send([Outgoing(MSG_ERROR, {
                    "code": "bad_seq",
                    "message": f"seq {msg.seq} not above {conn.last_in_seq}",
                })])
                continue
            conn.last_in_seq = msg.seq

            if msg.type == MSG_HELLO:
                await self._on_hello(conn, msg)
                continue
            if conn.session_id is None:
                await conn.send([Outgoing(MSG_ERROR, {"code": "no_session", "message": "say hello first"})])
                continue
            if msg.session != conn.session_id:
                await conn.send([Outgoing(MSG_ERROR, {
                    "code": "session_mismatch",
                    "message": "message session does not match this connection",
                })])
                continue
            replies = self.core.handle(conn.session_id, msg.type, msg.payload)
            self._dispatch_advisor_calls()
            self._save_kick.set()
            await conn.send(replies)

    async def _on_hello(self, conn: _Connection, msg: WireMessage) -> None:
        payload = msg.payload
        session_id, replies = self.core.hello(
            payload.get("session_id") or msg.session,
            protocol_version=int(payload.get("protocol_version", PROTOCOL_VERSION)),
            experiment_version=payload.get("experiment_version"),
        )
        if session_id is None:
            await conn.send(replies)  # upgrade error; leave connection up
            return
        previous = self._by_session.get(session_id)
        if previous is not None and previous is not conn and not previous.closed:
            try:
                await previous.send([Outgoing(MSG_ERROR, {
                    "code": "superseded",
                    "message": "another connection took over this session",
                })])
            except Exception:
                pass
            await previous.channel.close()
        conn.session_id = session_id
        self._by_session[session_id] = conn
        self._save_kick.set()
        await conn.send(replies)

    # --- advisor dispatch ---

    def _dispatch_advisor_calls(self) -> None:
        for call in self.core.take_advisor_calls():
            task = asyncio.create_task(self._run_advisor(call))
            self._tasks.append(task)
            task.add_done_callback(lambda t: self._tasks.remove(t) if t in self._tasks else None)

    async def _run_advisor(self, call: AdvisorCall) -> None:
        if call.advisor_kind == "remote":
            advisor = RemoteAdvisor(call.endpoint, call.auth_token_env, call.deadline_ms / 1000.0)
        else:
            advisor = ScriptedOracleAdvisor()
        reply = await asyncio.to_thread(
            run_advisor_with_deadline, advisor, call.description, call.transcript, call.deadline_ms
        )
        replies = self.core.advisor_reply(call, reply.text, reply.unavailable)
        self._save_kick.set()
        conn = self._by_session.get(call.session_id)
        if conn is not None and not conn.closed:
            try:
                await conn.send(replies)
            except Exception:
                logger.warning("could not deliver assistant reply to %s", call.session_id)

    # --- background workers ---

    async def _save_worker(self) -> None:
        while True:
            next_due = self.core.pump_saves()
            self._save_kick.clear()
            if next_due is None:
                self.core.queue.store.flush()
                await self._save_kick.wait()
                continue
            now = self.core.wall_ms()
            delay_s = max((next_due - now) / 1000.0, 0.0)
            try:
                await asyncio.wait_for(self._save_kick.wait(), timeout=delay_s or 0.001)
            except asyncio.TimeoutError:
                pass

    async def _heartbeat_sweeper(self) -> None:
        interval_s = self.heartbeat_interval_ms / 1000.0
        while True:
            await asyncio.sleep(interval_s)
            deadline = time.monotonic() * 1000.0 - self.heartbeat_interval_ms * HEARTBEATS_MISSED_FOR_IDLE
            for session_id, conn in list(self._by_session.items()):
                if conn.last_received_ms < deadline:
                    logger.info("session %s idle; closing its connection", session_id)
                    await conn.channel.close()
                    if self._by_session.get(session_id) is conn:
                        del self._by_session[session_id]


# --- websocket binding ---

def create_app(net: NetServer, static_dir: str | Path | None = None):
    """FastAPI app exposing /ws plus optional static webclient files."""
    from fastapi import FastAPI, WebSocket, WebSocketDisconnect
    from fastapi.staticfiles import StaticFiles

    app = FastAPI(title="prestep", docs_url=None, redoc_url=None)

    class WsChannel(Channel):
        def __init__(self, ws: WebSocket):
            self.ws = ws

        async def send_text(self, data: str) -> None:
            await self.ws.send_text(data)

        async def recv_text(self) -> str | None:
            try:
                return await self.ws.receive_text()
            except WebSocketDisconnect:
                return None
            except RuntimeError:
                return None

        async def close(self) -> None:
            try:
                await self.ws.close()
            except RuntimeError:
                pass

    async def ws_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        net._ensure_workers()
        await net.serve_channel(WsChannel(ws))

    # plain starlette route: the handler takes the socket itself, no
    # parameter injection involved
    from starlette.routing import WebSocketRoute

    app.router.routes.append(WebSocketRoute("/ws", ws_endpoint))

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="webclient")
    return app
