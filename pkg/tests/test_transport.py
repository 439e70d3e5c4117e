"""Wire transport: TCP binding, reconnects, and fault-injected clients."""

import asyncio
import json

import numpy as np
import pytest

from harness import CoreClient, FaultyDelivery, build_definition, gridnav_params, oracle_trajectory
from prestep.envs.gridnav import shortest_path_actions
from prestep.logstore import MemoryStore, iter_records
from prestep.netserver import NetServer
from prestep.protocol import decode_message
from prestep.records import StepRecord
from prestep.savequeue import SaveQueue
from prestep.server import ServerCore
from prestep.stages import AssistantConfig


class LineClient:
    """Minimal JSON-lines test client with its own seq counter."""

    def __init__(self, reader, writer):
        self.reader = reader
        self.writer = writer
        self.seq = 0
        self.session = None

    @classmethod
    async def connect(cls, host, port):
        reader, writer = await asyncio.open_connection(host, port)
        return cls(reader, writer)

    async def send(self, mtype, payload, *, seq=None, session=None):
        self.seq += 1
        doc = {
            "type": mtype,
            "session": session if session is not None else self.session,
            "seq": seq if seq is not None else self.seq,
            "payload": payload,
        }
        self.writer.write(json.dumps(doc).encode() + b"\n")
        await self.writer.drain()

    async def recv(self, timeout=5.0):
        line = await asyncio.wait_for(self.reader.readline(), timeout)
        if not line:
            return None
        return decode_message(line)

    async def recv_until(self, mtype, timeout=5.0, collect=None):
        while True:
            msg = await self.recv(timeout)
            assert msg is not None, f"connection closed waiting for {mtype}"
            if collect is not None:
                collect.append(msg)
            if msg.type == mtype:
                return msg

    async def hello(self, session_id=None):
        await self.send("hello", {"session_id": session_id})
        session_msg = await self.recv_until("session")
        self.session = session_msg.payload["session_id"]
        resync = await self.recv_until("resync")
        return session_msg, resync

    async def close(self):
        self.writer.close()
        try:
            await self.writer.wait_closed()
        except (ConnectionError, OSError):
            pass


async def start_server(definition=None, **core_kwargs):
    definition = definition or build_definition()
    store = MemoryStore()
    core = ServerCore(definition, SaveQueue(store),
                      log_reader=lambda: list(store.payloads), **core_kwargs)
    net = NetServer(core, heartbeat_interval_ms=60_000)
    host, port = await net.start_tcp("127.0.0.1", 0)
    return net, core, store, host, port


def test_tcp_hello_and_session_issuance():
    async def scenario():
        net, core, _, host, port = await start_server()
        try:
            client = await LineClient.connect(host, port)
            session_msg, resync = await client.hello()
            assert session_msg.payload["session_id"]
            assert resync.payload["view"]["kind"] == "instruction"
            assert session_msg.seq == 1 and resync.seq == 2
            await client.close()
        finally:
            await net.stop()

    asyncio.run(scenario())


def test_tcp_action_roundtrip_and_duplicate_resync():
    async def scenario():
        net, core, _, host, port = await start_server()
        try:
            client = await LineClient.connect(host, port)
            await client.hello()
            await client.send("action", {"kind": "continue"})
            frame_msg = await client.recv_until("env_frame")
            fid = frame_msg.payload["frame_id"]
            action_payload = {"kind": "env", "frame_id": fid, "action": 0, "t1": 1.0, "t2": 2.0}
            await client.send("action", action_payload)
            ack = await client.recv_until("env_ack")
            assert ack.payload["frame_id"] == fid
            assert ack.payload["next_frame"]["frame_id"] == fid + 1
            # duplicate delivery: answered with resync, state stepped once
            await client.send("action", action_payload)
            resync = await client.recv_until("resync")
            assert resync.payload["frame"]["frame_id"] == fid + 1
            assert core.session_snapshot(client.session).episode_steps == 1
            await client.close()
        finally:
            await net.stop()

    asyncio.run(scenario())


def test_tcp_reconnect_redelivers_current_frame():
    async def scenario():
        net, core, _, host, port = await start_server()
        try:
            client = await LineClient.connect(host, port)
            await client.hello()
            await client.send("action", {"kind": "continue"})
            frame_msg = await client.recv_until("env_frame")
            fid = frame_msg.payload["frame_id"]
            session_id = client.session
            await client.close()  # drop between frame delivery and action

            again = await LineClient.connect(host, port)
            _, resync = await again.hello(session_id)
            assert again.session == session_id
            assert resync.payload["frame"]["frame_id"] == fid
            await again.send("action", {"kind": "env", "frame_id": fid, "action": 0, "t1": 0, "t2": 0})
            ack = await again.recv_until("env_ack")
            assert ack.payload["frame_id"] == fid
            await again.close()
        finally:
            await net.stop()

    asyncio.run(scenario())


def test_tcp_second_connection_supersedes_first():
    async def scenario():
        net, _, _, host, port = await start_server()
        try:
            first = await LineClient.connect(host, port)
            await first.hello()
            second = await LineClient.connect(host, port)
            await second.hello(first.session)
            superseded = await first.recv_until("error")
            assert superseded.payload["code"] == "superseded"
            assert await first.recv() is None  # closed
            await second.close()
        finally:
            await net.stop()

    asyncio.run(scenario())


def test_tcp_malformed_message_errors_and_closes():
    async def scenario():
        net, _, _, host, port = await start_server()
        try:
            client = await LineClient.connect(host, port)
            client.writer.write(b"this is not json\n")
            await client.writer.drain()
            err = await client.recv_until("error")
            assert err.payload["code"] == "malformed"
            assert await client.recv() is None
        finally:
            await net.stop()

    asyncio.run(scenario())


def test_tcp_non_monotonic_seq_rejected():
    async def scenario():
        net, _, _, host, port = await start_server()
        try:
            client = await LineClient.connect(host, port)
            await client.hello()
            await client.send("ping", {}, seq=1)  # reused seq
            err = await client.recv_until("error")
            assert err.payload["code"] == "bad_seq"
            await client.send("ping", {})
            pong = await client.recv_until("pong")
            assert pong is not None
            await client.close()
        finally:
            await net.stop()

    asyncio.run(scenario())


def test_tcp_chat_reply_arrives_asynchronously():
    async def scenario():
        definition = build_definition(
            params=gridnav_params(show_goal=False),
            assistant=AssistantConfig(advisor="oracle", deadline_ms=5000.0),
            with_feedback=False,
        )
        net, _, _, host, port = await start_server(definition)
        try:
            client = await LineClient.connect(host, port)
            await client.hello()
            await client.send("action", {"kind": "continue"})
            await client.recv_until("env_frame")
            await client.send("chat_user", {"text": "what is my goal?"})
            reply = await client.recv_until("chat_assistant")
            assert "row 0, column 5" in reply.payload["text"]
            assert reply.payload["unavailable"] is False
            await client.close()
        finally:
            await net.stop()

    asyncio.run(scenario())


def test_idle_connection_swept_after_missed_heartbeats():
    async def scenario():
        definition = build_definition()
        store = MemoryStore()
        core = ServerCore(definition, SaveQueue(store))
        net = NetServer(core, heartbeat_interval_ms=100)
        host, port = await net.start_tcp("127.0.0.1", 0)
        try:
            client = await LineClient.connect(host, port)
            await client.hello()
            # stay silent past 3 heartbeat intervals; server closes
            line = await asyncio.wait_for(client.reader.readline(), timeout=2.0)
            assert line == b""
        finally:
            await net.stop()

    asyncio.run(scenario())


# --- protocol fault injection against the core (sans-IO) ---

def run_faulty_session(seed: int, disconnects: int, steps_target: int):
    """Drive one session through dup/reorder/drop and forced resyncs;
    returns (core, store, session_id, realized step count)."""
    definition = build_definition(
        min_successes=999, max_episodes=999, with_instruction=False, with_feedback=False,
    )
    store = MemoryStore()
    core = ServerCore(definition, SaveQueue(store),
                      log_reader=lambda: list(store.payloads), wall_ms=lambda: 0.0)
    client = CoreClient(core)
    client.hello()
    faults = FaultyDelivery(seed)
    gen = np.random.Generator(np.random.Philox(key=seed + 1))
    script = [int(a) for a in gen.integers(0, 5, size=steps_target * 3)]
    disconnect_at = set(int(i) for i in gen.choice(steps_target * 3, size=disconnects, replace=False))

    realized = 0
    guard = 0
    while realized < steps_target:
        guard += 1
        assert guard < steps_target * 50, "fault loop not making progress"
        if guard in disconnect_at:
            client.hello()  # forced reconnect: fresh resync
        if client.frame is None:
            client.hello()
            continue
        fid = client.frame["frame_id"]
        payload = {"kind": "env", "frame_id": fid, "action": script[fid], "t1": 0.0, "t2": 1.0}
        for delivered in faults.offer(("action", payload)):
            client.send(*delivered)
        realized = core.session_snapshot(client.session_id).frame_id
    for delivered in faults.flush():
        client.send(*delivered)
    core.flush_saves()
    return core, store, client.session_id, realized, definition, script


def test_faulty_delivery_exactly_once_and_oracle_equal():
    core, store, session_id, realized, definition, script = run_faulty_session(
        seed=77, disconnects=10, steps_target=120,
    )
    records = [r for r in iter_records(store.payloads)
               if isinstance(r, StepRecord) and r.session_id == session_id]
    frame_ids = [r.frame_id for r in records]
    assert frame_ids == list(range(len(frame_ids))), "gap or duplicate commit"
    assert len(frame_ids) >= 120
    seed = core.session_snapshot(session_id).seed
    oracle = oracle_trajectory(definition, "default", seed,
                               0, [script[k] for k in range(len(records))])
    assert len(oracle) == len(records)
    for rec, exp in zip(records, oracle):
        episode, step_in_ep, pre, _, _, reward, done = exp
        assert (rec.episode, rec.step, rec.reward, rec.done) == (episode, step_in_ep, reward, done)
        assert rec.pre_state == pre
