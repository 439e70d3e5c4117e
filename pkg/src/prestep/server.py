"""Sans-IO server core: sessions, stage flow, commits, persistence.

`ServerCore` holds every live session and processes one wire message at
a time, returning the messages to send back. It performs no socket or
file I/O of its own beyond enqueueing records on the save queue; the
asyncio bindings in `netserver` (and the test harnesses) own transport
and time. That split is what lets the protocol-fault and crash tests
drive the exact production logic deterministically.

Exactly-once stepping falls out of frame-id idempotence: an action
commits only when it names the session's current frame; anything else is
answered with a resync carrying the authoritative view. Per-session
handling is serialized by the caller (one message at a time per
session); distinct sessions share nothing but the save queue, which is
itself per-session ordered.
"""

from __future__ import annotations

import itertools
import logging
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .assistant import describe_observation, describe_state
from .envs import StateDescription, encode_state, get_env
from .errors import ClockAnomalyError, ProtocolError, StaleActionError
from .logstore import LogStore, ScanResult, scan_log
from .protocol import (
    MSG_ACTION,
    MSG_CHAT_ASSISTANT,
    MSG_CHAT_USER,
    MSG_ENV_ACK,
    MSG_ENV_FRAME,
    MSG_ERROR,
    MSG_FEEDBACK_FORM,
    MSG_FEEDBACK_SUBMIT,
    MSG_PING,
    MSG_PONG,
    MSG_RESYNC,
    MSG_SESSION,
    MSG_STAGE_DONE,
    MSG_STAGE_SHOW,
    PROTOCOL_VERSION,
    frame_payload,
)
from .records import (
    ANOMALY_CLOCK_BACKWARDS,
    CHAT_ROLE_ASSISTANT,
    CHAT_ROLE_USER,
    ChatRecord,
    ContinueRecord,
    EpisodeEndRecord,
    FeedbackRecord,
    Record,
    SessionStartRecord,
    SnapshotRecord,
    StepRecord,
    encode_record,
)
from .savequeue import BackoffPolicy, QueueFullError, SaveQueue
from .sessions import (
    ChatMessage,
    SessionState,
    ensure_episode_state,
    fold_records,
    new_session_state,
    seed_for_session,
    session_records,
    step_rng,
)
from .speculation import ActionEvent, SpeculativeFrame, commit_action, open_frame, response_time
from .stages import (
    KIND_ENVIRONMENT,
    KIND_FEEDBACK,
    KIND_INSTRUCTION,
    PHASE_COMPLETE,
    PHASE_INTERACTING,
    PHASE_SHOWING,
    ContinueEvent,
    EnvironmentStage,
    EpisodeEnded,
    ExperimentDefinition,
    FormValidationError,
    StageConfig,
    advance,
    form_to_payload,
    submit_feedback,
    validate_definition,
)

logger = logging.getLogger(__name__)

HEARTBEAT_INTERVAL_MS = 15_000.0
HEARTBEATS_MISSED_FOR_IDLE = 3
TRANSCRIPT_EXCHANGE_CAP = 50  # user messages per episode
SNAPSHOT_EVERY_RECORDS = 50


@dataclass(frozen=True, slots=True)
class Outgoing:
    """A message the core wants delivered to a session's connection."""

    type: str
    payload: dict


@dataclass(frozen=True, slots=True)
class AdvisorCall:
    """Deferred advisor invocation; the transport binding executes it off
    the session path and feeds the reply back via `advisor_reply`."""

    call_id: int
    session_id: str
    description: StateDescription
    transcript: tuple[ChatMessage, ...]
    advisor_kind: str
    endpoint: str
    auth_token_env: str
    deadline_ms: float


class _Session:
    """Per-session runtime: state plus the currently open frame."""

    def __init__(self, state: SessionState, stages: tuple[StageConfig, ...]):
        self.state = state
        self.stages = stages
        self.frame: SpeculativeFrame | None = None
        self.records_since_snapshot = 0

    @property
    def current_stage(self) -> StageConfig:
        return self.stages[self.state.progress.stage_index]


class ServerCore:
    def __init__(
        self,
        definition: ExperimentDefinition,
        queue: SaveQueue,
        *,
        log_reader: Callable[[], list[bytes]] | None = None,
        wall_ms: Callable[[], float] | None = None,
        session_id_factory: Callable[[], str] | None = None,
        seed_fn: Callable[[str], int] = seed_for_session,
        heartbeat_interval_ms: float = HEARTBEAT_INTERVAL_MS,
    ):
        issues = validate_definition(definition)
        if issues:
            raise ProtocolError(
                "bad_definition", "; ".join(str(issue) for issue in issues)
            )
        self.definition = definition
        self.queue = queue
        self._log_reader = log_reader
        self._wall_ms = wall_ms or (lambda: time.time() * 1000.0)
        self._session_id_factory = session_id_factory or (lambda: uuid.uuid4().hex)
        self._seed_fn = seed_fn
        self._sessions: dict[str, _Session] = {}
        self._advisor_calls: list[AdvisorCall] = []
        self._call_ids = itertools.count(1)
        self.heartbeat_interval_ms = heartbeat_interval_ms

    @classmethod
    def open(
        cls,
        definition: ExperimentDefinition,
        data_dir: str | Path,
        policy: BackoffPolicy = BackoffPolicy(),
        *,
        queue_seed: int = 0,
        queue_capacity: int = 100_000,
        **kwargs,
    ) -> "ServerCore":
        data_dir = Path(data_dir)
        log_path = data_dir / f"{definition.experiment_id}.log"
        store = LogStore(log_path)
        dead = LogStore(data_dir / f"{definition.experiment_id}.deadletter.log")
        queue = SaveQueue(
            store,
            policy,
            seed=queue_seed,
            capacity=queue_capacity,
            on_dead_letter=lambda task: dead.append(task.payload),
        )

        def read_log() -> list[bytes]:
            result: ScanResult = scan_log(log_path)
            if result.corrupt_at is not None:
                logger.warning(
                    "record log %s corrupt at byte %d (%s); restoring the consistent prefix",
                    log_path, result.corrupt_at, result.message,
                )
            return result.payloads

        return cls(definition, queue, log_reader=read_log, **kwargs)

    # --- session lifecycle ---

    def hello(
        self,
        session_id: str | None,
        *,
        protocol_version: int = PROTOCOL_VERSION,
        experiment_version: int | None = None,
    ) -> tuple[str | None, list[Outgoing]]:
        """Authenticate a connection to a session: issue or restore, then
        hand back the session greeting plus a full resync view."""
        if protocol_version != PROTOCOL_VERSION:
            return None, [_error("upgrade_required",
                                 f"protocol {protocol_version} unsupported (server {PROTOCOL_VERSION})")]
        if experiment_version is not None and experiment_version != self.definition.version:
            return None, [_error("upgrade_required",
                                 f"experiment version {experiment_version} is stale "
                                 f"(current {self.definition.version})")]
        session = None
        if session_id is not None:
            session = self._sessions.get(session_id) or self._restore(session_id)
        if session is None:
            session_id = self._session_id_factory()
            seed = self._seed_fn(session_id)
            state = new_session_state(self.definition, session_id, seed)
            session = _Session(state, self.definition.stages_for_condition(state.condition))
            self._sessions[session_id] = session
            self._persist(session, SessionStartRecord(
                session_id=session_id,
                experiment_id=self.definition.experiment_id,
                experiment_version=self.definition.version,
                condition=state.condition,
                seed=seed,
                wall_ms=self._wall_ms(),
            ))
        greeting = Outgoing(MSG_SESSION, {
            "session_id": session_id,
            "experiment_id": self.definition.experiment_id,
            "experiment_version": self.definition.version,
            "title": self.definition.title,
            "consent": self.definition.consent,
            "heartbeat_interval_ms": self.heartbeat_interval_ms,
            "protocol_version": PROTOCOL_VERSION,
        })
        return session_id, [greeting, self._resync(session)]

    def _restore(self, session_id: str) -> _Session | None:
        if self._log_reader is None:
            return None
        from .logstore import iter_records

        records = list(iter_records(self._log_reader()))
        mine = session_records(records, session_id)
        if not mine:
            return None
        state = fold_records(self.definition, mine)
        if state is None:
            return None
        session = _Session(state, self.definition.stages_for_condition(state.condition))
        self._sessions[session_id] = session
        return session

    def known_session(self, session_id: str) -> bool:
        return session_id in self._sessions

    def session_snapshot(self, session_id: str) -> SessionState:
        """Copy of a live session's state, for operators and harnesses."""
        return self._sessions[session_id].state.clone()

    # --- message dispatch ---

    def handle(self, session_id: str, msg_type: str, payload: dict) -> list[Outgoing]:
        session = self._sessions.get(session_id)
        if session is None:
            return [_error("unknown_session", "say hello first")]
        if msg_type == MSG_PING:
            return [Outgoing(MSG_PONG, {})]
        try:
            if msg_type == MSG_ACTION:
                return self._on_action(session, payload)
            if msg_type == MSG_FEEDBACK_SUBMIT:
                return self._on_feedback(session, payload)
            if msg_type == MSG_CHAT_USER:
                return self._on_chat(session, payload)
        except QueueFullError:
            return [_error("saving", "persistence backlog; retry shortly")]
        return [_error("malformed", f"unexpected message type {msg_type!r}")]

    # --- action flow ---

    def _on_action(self, session: _Session, payload: dict) -> list[Outgoing]:
        kind = payload.get("kind", "env")
        if kind == "continue":
            return self._on_continue(session)
        if kind != "env":
            return [_error("malformed", f"unknown action kind {kind!r}")]
        state = session.state
        if state.progress.phase != PHASE_INTERACTING:
            return [_error("out_of_phase", "no environment interaction in progress"),
                    self._resync(session)]
        try:
            event = ActionEvent(
                frame_id=int(payload["frame_id"]),
                action=int(payload["action"]),
                t1=float(payload["t1"]),
                t2=float(payload["t2"]),
            )
        except (KeyError, TypeError, ValueError):
            return [_error("malformed", "action needs frame_id, action, t1, t2")]

        self._ensure_frame(session)
        frame = session.frame
        assert frame is not None
        if event.frame_id != frame.frame_id:
            return [self._resync(session)]

        # Pre-flight the save path: a commit produces at most a step, an
        # episode end, and their snapshots. Back off before mutating.
        if self.queue.pending + 4 > self.queue.capacity:
            raise QueueFullError("save queue near capacity")

        anomalies = 0
        try:
            response_time(event)
        except ClockAnomalyError:
            anomalies |= ANOMALY_CLOCK_BACKWARDS

        stage = session.current_stage
        assert isinstance(stage, EnvironmentStage)
        try:
            new_state, result = commit_action(frame, event)
        except StaleActionError:
            return [self._resync(session)]
        except ProtocolError as exc:
            return [_error(exc.code, str(exc)), self._resync(session)]

        pre_state = state.env_state
        assert pre_state is not None
        self._persist(session, StepRecord(
            session_id=state.session_id,
            stage_index=state.progress.stage_index,
            stage_id=stage.id,
            episode=state.progress.episode_index,
            step=state.episode_steps,
            frame_id=frame.frame_id,
            pre_state=encode_state(pre_state),
            action=event.action,
            reward=result.reward,
            done=result.done,
            t1=event.t1,
            t2=event.t2,
            server_wall_ms=self._wall_ms(),
            anomalies=anomalies,
        ))
        state.env_state = new_state
        state.episode_steps += 1
        state.episode_return += result.reward
        state.frame_id = frame.frame_id + 1
        session.frame = None

        ack: dict = {
            "frame_id": event.frame_id,
            "action": event.action,
            "reward": result.reward,
            "done": result.done,
            "episode_end": None,
            "next_frame": None,
            "stage_done": False,
        }
        extra: list[Outgoing] = []
        if result.done:
            episode_return = state.episode_return
            rule = stage.completion
            success = episode_return >= rule.success_return_threshold
            ended_episode = state.progress.episode_index
            self._persist(session, EpisodeEndRecord(
                session_id=state.session_id,
                stage_index=state.progress.stage_index,
                episode=ended_episode,
                episode_return=episode_return,
                success=success,
                steps=state.episode_steps,
                wall_ms=self._wall_ms(),
            ))
            before = state.progress.stage_index
            state.progress = advance(session.stages, state.progress, EpisodeEnded(episode_return))
            state.env_state = None
            state.episode_return = 0.0
            state.episode_steps = 0
            state.transcript = ()
            ack["episode_end"] = {
                "episode": ended_episode,
                "return": episode_return,
                "success": success,
            }
            if state.progress.stage_index != before or state.progress.phase == PHASE_COMPLETE:
                state.frame_id = 0
                ack["stage_done"] = True
                extra.append(Outgoing(MSG_STAGE_DONE, {
                    "stage_index": before,
                    "experiment_complete": state.progress.phase == PHASE_COMPLETE,
                }))
                extra.extend(self._stage_entry(session))
            else:
                self._ensure_frame(session)
                assert session.frame is not None
                ack["next_frame"] = self._frame_payload(session)
        else:
            self._ensure_frame(session)
            ack["next_frame"] = self._frame_payload(session)
        return [Outgoing(MSG_ENV_ACK, ack), *extra]

    def _on_continue(self, session: _Session) -> list[Outgoing]:
        state = session.state
        stage = session.current_stage
        if state.progress.phase != PHASE_SHOWING or stage.kind != KIND_INSTRUCTION:
            return [_error("out_of_phase", "nothing to continue"), self._resync(session)]
        self._persist(session, ContinueRecord(
            session_id=state.session_id,
            stage_index=state.progress.stage_index,
            wall_ms=self._wall_ms(),
        ))
        before = state.progress.stage_index
        state.progress = advance(session.stages, state.progress, ContinueEvent())
        state.frame_id = 0
        state.transcript = ()
        done = Outgoing(MSG_STAGE_DONE, {
            "stage_index": before,
            "experiment_complete": state.progress.phase == PHASE_COMPLETE,
        })
        return [done, *self._stage_entry(session)]

    def _on_feedback(self, session: _Session, payload: dict) -> list[Outgoing]:
        state = session.state
        stage = session.current_stage
        answers = payload.get("answers")
        if not isinstance(answers, dict):
            return [_error("malformed", "feedback_submit needs an answers object")]
        try:
            new_progress = submit_feedback(session.stages, state.progress, answers)
        except FormValidationError as exc:
            return [_error(exc.code, str(exc), {"questions": sorted(exc.issues)})]
        except ProtocolError as exc:
            return [_error(exc.code, str(exc)), self._resync(session)]
        from .records import canonical_answers_json

        self._persist(session, FeedbackRecord(
            session_id=state.session_id,
            stage_index=state.progress.stage_index,
            stage_id=stage.id,
            answers_json=canonical_answers_json(answers),
            wall_ms=self._wall_ms(),
        ))
        before = state.progress.stage_index
        state.answers[stage.id] = dict(answers)
        state.progress = new_progress
        state.frame_id = 0
        state.transcript = ()
        done = Outgoing(MSG_STAGE_DONE, {
            "stage_index": before,
            "experiment_complete": state.progress.phase == PHASE_COMPLETE,
        })
        return [done, *self._stage_entry(session)]

    # --- chat flow ---

    def _on_chat(self, session: _Session, payload: dict) -> list[Outgoing]:
        state = session.state
        stage = session.current_stage
        text = payload.get("text")
        if not isinstance(text, str) or not text.strip():
            return [_error("malformed", "chat_user needs text")]
        if stage.kind != KIND_ENVIRONMENT or stage.assistant is None:
            return [_error("chat_disabled", "no assistant on this stage")]
        user_count = sum(1 for msg in state.transcript if msg.role == "user")
        if user_count >= TRANSCRIPT_EXCHANGE_CAP:
            return [_error("chat_cap", f"transcript cap of {TRANSCRIPT_EXCHANGE_CAP} exchanges reached")]
        self._persist(session, ChatRecord(
            session_id=state.session_id,
            stage_index=state.progress.stage_index,
            episode=state.progress.episode_index,
            role=CHAT_ROLE_USER,
            text=text,
            unavailable=False,
            wall_ms=self._wall_ms(),
        ))
        state.transcript += (ChatMessage("user", text),)
        self._ensure_frame(session)
        assert state.env_state is not None
        if stage.assistant.sees == "observation":
            env = get_env(stage.env_kind)
            description = describe_observation(env.observe(state.env_state, stage.params))
        else:
            description = describe_state(state.env_state, stage.params)
        self._advisor_calls.append(AdvisorCall(
            call_id=next(self._call_ids),
            session_id=state.session_id,
            description=description,
            transcript=state.transcript,
            advisor_kind=stage.assistant.advisor,
            endpoint=stage.assistant.endpoint,
            auth_token_env=stage.assistant.auth_token_env,
            deadline_ms=stage.assistant.deadline_ms,
        ))
        return []

    def take_advisor_calls(self) -> list[AdvisorCall]:
        calls, self._advisor_calls = self._advisor_calls, []
        return calls

    def advisor_reply(self, call: AdvisorCall, text: str, unavailable: bool) -> list[Outgoing]:
        session = self._sessions.get(call.session_id)
        if session is None:
            return []
        state = session.state
        self._persist(session, ChatRecord(
            session_id=state.session_id,
            stage_index=state.progress.stage_index,
            episode=state.progress.episode_index,
            role=CHAT_ROLE_ASSISTANT,
            text=text,
            unavailable=unavailable,
            wall_ms=self._wall_ms(),
        ))
        state.transcript += (ChatMessage("assistant", text, unavailable),)
        return [Outgoing(MSG_CHAT_ASSISTANT, {"text": text, "unavailable": unavailable})]

    # --- views ---

    def _ensure_frame(self, session: _Session) -> None:
        state = session.state
        if state.progress.phase != PHASE_INTERACTING:
            return
        ensure_episode_state(state, session.stages)
        if session.frame is None:
            stage = session.current_stage
            assert isinstance(stage, EnvironmentStage)
            env = get_env(stage.env_kind)
            rng = step_rng(
                state.seed, state.progress.stage_index,
                state.progress.episode_index, state.episode_steps,
            )
            session.frame = open_frame(
                env, stage.params, state.env_state, rng,
                frame_id=state.frame_id, wall_ms=self._wall_ms(),
            )

    def _frame_payload(self, session: _Session) -> dict:
        assert session.frame is not None
        state = session.state
        return frame_payload(
            session.frame,
            stage_index=state.progress.stage_index,
            episode=state.progress.episode_index,
            step=state.episode_steps,
        )

    def _stage_entry(self, session: _Session) -> list[Outgoing]:
        """Messages that present the current stage to the client."""
        state = session.state
        if state.progress.phase == PHASE_COMPLETE:
            return [Outgoing(MSG_STAGE_SHOW, {
                "stage_index": state.progress.stage_index,
                "view": {"kind": "complete"},
            })]
        stage = session.current_stage
        if stage.kind == KIND_INSTRUCTION:
            return [Outgoing(MSG_STAGE_SHOW, {
                "stage_index": state.progress.stage_index,
                "view": {"kind": KIND_INSTRUCTION, "body": stage.body},
            })]
        if stage.kind == KIND_FEEDBACK:
            return [Outgoing(MSG_FEEDBACK_FORM, {
                "stage_index": state.progress.stage_index,
                "form": form_to_payload(stage.form),
            })]
        self._ensure_frame(session)
        return [Outgoing(MSG_ENV_FRAME, self._frame_payload(session))]

    def _resync(self, session: _Session) -> Outgoing:
        """The whole current view in one message; a client holding only
        this payload can always continue."""
        state = session.state
        view: dict
        frame = None
        if state.progress.phase == PHASE_COMPLETE:
            view = {"kind": "complete"}
        else:
            stage = session.current_stage
            if stage.kind == KIND_INSTRUCTION:
                view = {"kind": KIND_INSTRUCTION, "body": stage.body}
            elif stage.kind == KIND_FEEDBACK:
                view = {"kind": KIND_FEEDBACK, "form": form_to_payload(stage.form)}
            else:
                view = {
                    "kind": KIND_ENVIRONMENT,
                    "env": stage.env_kind,
                    "chat_enabled": stage.assistant is not None,
                }
                self._ensure_frame(session)
                frame = self._frame_payload(session)
        return Outgoing(MSG_RESYNC, {
            "stage_index": state.progress.stage_index,
            "episode": state.progress.episode_index,
            "successes": state.progress.successes,
            "phase": state.progress.phase,
            "view": view,
            "frame": frame,
            "transcript": [
                {"role": msg.role, "text": msg.text, "unavailable": msg.unavailable}
                for msg in state.transcript
            ],
        })

    # --- persistence plumbing ---

    def _persist(self, session: _Session, record: Record) -> None:
        now = self._wall_ms()
        self.queue.enqueue(encode_record(record), session.state.session_id, now)
        session.records_since_snapshot += 1
        if session.records_since_snapshot >= SNAPSHOT_EVERY_RECORDS:
            from .sessions import encode_session_state

            session.records_since_snapshot = 0
            self.queue.enqueue(
                encode_record(SnapshotRecord(
                    session_id=session.state.session_id,
                    payload=encode_session_state(session.state),
                    wall_ms=now,
                )),
                session.state.session_id,
                now,
            )

    def wall_ms(self) -> float:
        return self._wall_ms()

    def pump_saves(self) -> float | None:
        return self.queue.pump(self._wall_ms())

    def flush_saves(self, deadline_ms: float = float("inf")) -> None:
        self.queue.drain(self._wall_ms(), deadline_ms)


def _error(code: str, message: str, detail: dict | None = None) -> Outgoing:
    payload = {"code": code, "message": message}
    if detail:
        payload.update(detail)
    return Outgoing(MSG_ERROR, payload)
