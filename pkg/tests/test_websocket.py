"""The browser-facing binding: websocket endpoint + static files."""

import asyncio
import json

from harness import build_definition
from prestep.logstore import MemoryStore
from prestep.netserver import NetServer, create_app
from prestep.savequeue import SaveQueue
from prestep.server import ServerCore


def test_websocket_full_stage_flow(tmp_path):
    async def scenario():
        import uvicorn
        import websockets

        definition = build_definition()
        store = MemoryStore()
        core = ServerCore(definition, SaveQueue(store), log_reader=lambda: list(store.payloads))
        net = NetServer(core, heartbeat_interval_ms=600_000)
        static = tmp_path / "static"
        static.mkdir()
        (static / "index.html").write_text("<html><body>webclient</body></html>")
        app = create_app(net, static_dir=static)
        server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error"))
        task = asyncio.create_task(server.serve())
        while not server.started:
            await asyncio.sleep(0.01)
        port = server.servers[0].sockets[0].getsockname()[1]
        try:
            import httpx

            async with httpx.AsyncClient() as http:
                index = await http.get(f"http://127.0.0.1:{port}/")
                assert index.status_code == 200 and "webclient" in index.text

            async with websockets.connect(f"ws://127.0.0.1:{port}/ws") as ws:
                await ws.send(json.dumps({"type": "hello", "session": None, "seq": 1, "payload": {}}))
                session = json.loads(await ws.recv())
                assert session["type"] == "session"
                sid = session["payload"]["session_id"]
                resync = json.loads(await ws.recv())
                assert resync["payload"]["view"]["kind"] == "instruction"
                await ws.send(json.dumps({"type": "action", "session": sid, "seq": 2,
                                          "payload": {"kind": "continue"}}))
                assert json.loads(await ws.recv())["type"] == "stage_done"
                frame = json.loads(await ws.recv())
                assert frame["type"] == "env_frame"
                assert frame["payload"]["frame_id"] == 0
                await ws.send(json.dumps({
                    "type": "action", "session": sid, "seq": 3,
                    "payload": {"kind": "env", "frame_id": 0, "action": 4, "t1": 1.0, "t2": 2.0},
                }))
                ack = json.loads(await ws.recv())
                assert ack["type"] == "env_ack"
                assert ack["payload"]["next_frame"]["frame_id"] == 1
                # successor states never appear in client-bound frames
                assert "state" not in json.dumps(ack)
        finally:
            server.should_exit = True
            await task
            await net.stop()

    asyncio.run(scenario())
