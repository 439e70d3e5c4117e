"""Wire protocol: message framing and payload shapes.

Messages are JSON objects, one per line over TCP or one per text frame
over a websocket, with four top-level fields: `type`, `session`, `seq`,
and `payload`. Sequence numbers increase by one per direction per
connection; idempotence of environment steps is keyed on frame ids, not
sequence numbers, so duplicated or resequenced deliveries are harmless.

`env_frame` payloads carry the current observation plus every successor
observation (with reward and done), never successor states. See
docs/protocol.md for the full field-by-field schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .envs import Observation
from .errors import ProtocolError
from .speculation import SpeculativeFrame

PROTOCOL_VERSION = 1

MSG_HELLO = "hello"
MSG_SESSION = "session"
MSG_STAGE_SHOW = "stage_show"
MSG_ENV_FRAME = "env_frame"
MSG_ACTION = "action"
MSG_ENV_ACK = "env_ack"
MSG_STAGE_DONE = "stage_done"
MSG_FEEDBACK_FORM = "feedback_form"
MSG_FEEDBACK_SUBMIT = "feedback_submit"
MSG_CHAT_USER = "chat_user"
MSG_CHAT_ASSISTANT = "chat_assistant"
MSG_RESYNC = "resync"
MSG_ERROR = "error"
# connection liveness probes; payload-free extension to the stage-flow set
MSG_PING = "ping"
MSG_PONG = "pong"

MESSAGE_TYPES = frozenset(
    {
        MSG_HELLO,
        MSG_SESSION,
        MSG_STAGE_SHOW,
        MSG_ENV_FRAME,
        MSG_ACTION,
        MSG_ENV_ACK,
        MSG_STAGE_DONE,
        MSG_FEEDBACK_FORM,
        MSG_FEEDBACK_SUBMIT,
        MSG_CHAT_USER,
        MSG_CHAT_ASSISTANT,
        MSG_RESYNC,
        MSG_ERROR,
        MSG_PING,
        MSG_PONG,
    }
)


@dataclass(frozen=True, slots=True)
class WireMessage:
    type: str
    session: str | None
    seq: int
    payload: dict


def encode_message(msg: WireMessage) -> bytes:
    doc = {"type": msg.type, "session": msg.session, "seq": msg.seq, "payload": msg.payload}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def decode_message(data: bytes | str) -> WireMessage:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProtocolError("malformed", f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProtocolError("malformed", "message must be a JSON object")
    mtype = doc.get("type")
    if mtype not in MESSAGE_TYPES:
        raise ProtocolError("malformed", f"unknown message type {mtype!r}")
    session = doc.get("session")
    if session is not None and not isinstance(session, str):
        raise ProtocolError("malformed", "session must be a string or null")
    seq = doc.get("seq")
    if not isinstance(seq, int) or isinstance(seq, bool):
        raise ProtocolError("malformed", "seq must be an integer")
    payload = doc.get("payload", {})
    if not isinstance(payload, dict):
        raise ProtocolError("malformed", "payload must be an object")
    return WireMessage(type=mtype, session=session, seq=seq, payload=payload)


# --- payload shapes ---

def observation_payload(obs: Observation) -> dict:
    return {
        "grid": [list(row) for row in obs.grid],
        "overlay": obs.overlay,
        "legal": list(obs.legal),
    }


def observation_from_payload(payload: dict) -> Observation:
    return Observation(
        grid=tuple(tuple(int(v) for v in row) for row in payload["grid"]),
        overlay=payload.get("overlay"),
        legal=tuple(bool(v) for v in payload["legal"]),
    )


def frame_payload(frame: SpeculativeFrame, *, stage_index: int, episode: int, step: int) -> dict:
    """Client-bound view of a frame: observations, rewards, done flags.
    Successor states are deliberately absent."""
    return {
        "frame_id": frame.frame_id,
        "stage_index": stage_index,
        "episode": episode,
        "step": step,
        "observation": observation_payload(frame.observation),
        "successors": {
            str(action): {
                "observation": observation_payload(result.observation),
                "reward": result.reward,
                "done": result.done,
            }
            for action, result in sorted(frame.successors.items())
        },
    }


def message_bytes(mtype: str, payload: dict, session: str = "0" * 32, seq: int = 1) -> int:
    """Serialized size of a message as it would go on the wire; the
    latency simulator uses this so bandwidth numbers track the real
    protocol."""
    return len(encode_message(WireMessage(type=mtype, session=session, seq=seq, payload=payload)))
