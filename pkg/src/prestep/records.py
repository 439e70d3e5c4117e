"""Persisted record types and their canonical binary codecs.

Every participant interaction becomes one record. The record stream is
the source of truth: session state is a fold over it, so each record
carries enough to replay its effect deterministically (step records
embed the encoded pre-step state; the post-step state is recomputed by
the environment on restore).

Payload layout (inside the log framing): schema version byte, record
type byte, then the type's fields in fixed order. See docs/storage.md.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

from .codec import Reader, Writer
from .errors import CodecError

RECORD_SCHEMA_VERSION = 1

RT_SESSION_START = 1
RT_STEP = 2
RT_EPISODE_END = 3
RT_CONTINUE = 4
RT_FEEDBACK = 5
RT_CHAT = 6
RT_SNAPSHOT = 7

ANOMALY_CLOCK_BACKWARDS = 1  # t2 < t1 on the client clock

CHAT_ROLE_USER = 0
CHAT_ROLE_ASSISTANT = 1


@dataclass(frozen=True, slots=True)
class SessionStartRecord:
    session_id: str
    experiment_id: str
    experiment_version: int
    condition: str
    seed: int
    wall_ms: float


@dataclass(frozen=True, slots=True)
class StepRecord:
    session_id: str
    stage_index: int
    stage_id: str
    episode: int
    step: int
    frame_id: int
    pre_state: bytes
    action: int
    reward: float
    done: bool
    t1: float
    t2: float
    server_wall_ms: float
    anomalies: int

    @property
    def response_time_ms(self) -> float:
        return self.t2 - self.t1


@dataclass(frozen=True, slots=True)
class EpisodeEndRecord:
    session_id: str
    stage_index: int
    episode: int
    episode_return: float
    success: bool
    steps: int
    wall_ms: float


@dataclass(frozen=True, slots=True)
class ContinueRecord:
    """Participant acknowledged an instruction stage."""

    session_id: str
    stage_index: int
    wall_ms: float


@dataclass(frozen=True, slots=True)
class FeedbackRecord:
    session_id: str
    stage_index: int
    stage_id: str
    answers_json: str  # canonical JSON: sorted keys, no whitespace
    wall_ms: float


@dataclass(frozen=True, slots=True)
class ChatRecord:
    session_id: str
    stage_index: int
    episode: int
    role: int
    text: str
    unavailable: bool
    wall_ms: float


@dataclass(frozen=True, slots=True)
class SnapshotRecord:
    """Periodic full session state; restore starts from the latest one
    instead of folding the whole stream. Pure optimization."""

    session_id: str
    payload: bytes
    wall_ms: float


Record = Union[
    SessionStartRecord,
    StepRecord,
    EpisodeEndRecord,
    ContinueRecord,
    FeedbackRecord,
    ChatRecord,
    SnapshotRecord,
]


def canonical_answers_json(answers: dict[str, object]) -> str:
    return json.dumps(answers, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def encode_record(record: Record) -> bytes:
    w = Writer()
    w.u8(RECORD_SCHEMA_VERSION)
    if isinstance(record, SessionStartRecord):
        w.u8(RT_SESSION_START)
        w.string(record.session_id)
        w.string(record.experiment_id)
        w.u32(record.experiment_version)
        w.string(record.condition)
        w.u64(record.seed)
        w.f64(record.wall_ms)
    elif isinstance(record, StepRecord):
        w.u8(RT_STEP)
        w.string(record.session_id)
        w.u32(record.stage_index)
        w.string(record.stage_id)
        w.u32(record.episode)
        w.u32(record.step)
        w.u64(record.frame_id)
        w.blob(record.pre_state)
        w.u16(record.action)
        w.f64(record.reward)
        w.boolean(record.done)
        w.f64(record.t1)
        w.f64(record.t2)
        w.f64(record.server_wall_ms)
        w.u8(record.anomalies)
    elif isinstance(record, EpisodeEndRecord):
        w.u8(RT_EPISODE_END)
        w.string(record.session_id)
        w.u32(record.stage_index)
        w.u32(record.episode)
        w.f64(record.episode_return)
        w.boolean(record.success)
        w.u32(record.steps)
        w.f64(record.wall_ms)
    elif isinstance(record, ContinueRecord):
        w.u8(RT_CONTINUE)
        w.string(record.session_id)
        w.u32(record.stage_index)
        w.f64(record.wall_ms)
    elif isinstance(record, FeedbackRecord):
        w.u8(RT_FEEDBACK)
        w.string(record.session_id)
        w.u32(record.stage_index)
        w.string(record.stage_id)
        w.string(record.answers_json)
        w.f64(record.wall_ms)
    elif isinstance(record, ChatRecord):
        w.u8(RT_CHAT)
        w.string(record.session_id)
        w.u32(record.stage_index)
        w.u32(record.episode)
        w.u8(record.role)
        w.string(record.text)
        w.boolean(record.unavailable)
        w.f64(record.wall_ms)
    elif isinstance(record, SnapshotRecord):
        w.u8(RT_SNAPSHOT)
        w.string(record.session_id)
        w.blob(record.payload)
        w.f64(record.wall_ms)
    else:
        raise TypeError(f"not a record: {type(record).__name__}")
    return w.getvalue()


def decode_record(payload: bytes) -> Record:
    r = Reader(payload)
    version = r.u8()
    if version != RECORD_SCHEMA_VERSION:
        raise CodecError(0, f"unsupported record schema version {version}")
    rtype = r.u8()
    if rtype == RT_SESSION_START:
        rec: Record = SessionStartRecord(
            session_id=r.string(),
            experiment_id=r.string(),
            experiment_version=r.u32(),
            condition=r.string(),
            seed=r.u64(),
            wall_ms=r.f64(),
        )
    elif rtype == RT_STEP:
        rec = StepRecord(
            session_id=r.string(),
            stage_index=r.u32(),
            stage_id=r.string(),
            episode=r.u32(),
            step=r.u32(),
            frame_id=r.u64(),
            pre_state=r.blob(),
            action=r.u16(),
            reward=r.f64(),
            done=r.boolean(),
            t1=r.f64(),
            t2=r.f64(),
            server_wall_ms=r.f64(),
            anomalies=r.u8(),
        )
    elif rtype == RT_EPISODE_END:
        rec = EpisodeEndRecord(
            session_id=r.string(),
            stage_index=r.u32(),
            episode=r.u32(),
            episode_return=r.f64(),
            success=r.boolean(),
            steps=r.u32(),
            wall_ms=r.f64(),
        )
    elif rtype == RT_CONTINUE:
        rec = ContinueRecord(session_id=r.string(), stage_index=r.u32(), wall_ms=r.f64())
    elif rtype == RT_FEEDBACK:
        rec = FeedbackRecord(
            session_id=r.string(),
            stage_index=r.u32(),
            stage_id=r.string(),
            answers_json=r.string(),
            wall_ms=r.f64(),
        )
    elif rtype == RT_CHAT:
        rec = ChatRecord(
            session_id=r.string(),
            stage_index=r.u32(),
            episode=r.u32(),
            role=r.u8(),
            text=r.string(),
            unavailable=r.boolean(),
            wall_ms=r.f64(),
        )
    elif rtype == RT_SNAPSHOT:
        rec = SnapshotRecord(session_id=r.string(), payload=r.blob(), wall_ms=r.f64())
    else:
        raise CodecError(1, f"unknown record type {rtype}")
    r.expect_end()
    return rec
