"""Session state and its reconstruction from the record stream.

A session's state is a fold over its persisted records: the same
`advance` transitions the live server uses, replayed in order. Step
records embed the encoded pre-step state and the action, so the post
state is recomputed through the environment under the recomputed step
stream; determinism makes the result bit-identical to what the live
server held. Snapshots are shortcuts into that fold, nothing more.

Random streams are keyed by position, never by action or wall time:

    episode stream   = Rng(seed).split(stage_index).split(episode)
    reset draw       = episode stream.split(0)
    step k draw      = episode stream.split(1).split(k)

Everything a step needs is recoverable from (seed, stage, episode,
step), which is what lets a restored session resume mid-episode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .codec import Reader, Writer
from .envs import EnvState, decode_state, encode_state, get_env
from .errors import CodecError
from .records import (
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
)
from .rng import Rng
from .stages import (
    PHASE_COMPLETE,
    PHASE_INTERACTING,
    ContinueEvent,
    EnvironmentStage,
    EpisodeEnded,
    ExperimentDefinition,
    FeedbackSubmitted,
    StageConfig,
    StageProgress,
    advance,
    initial_progress,
)

STREAM_RESET = 0
STREAM_STEP = 1

SNAPSHOT_CODEC_VERSION = 1

_PHASES = ("showing", "interacting", "complete")


def episode_rng(seed: int, stage_index: int, episode: int) -> Rng:
    return Rng(seed).split(stage_index).split(episode)


def reset_rng(seed: int, stage_index: int, episode: int) -> Rng:
    return episode_rng(seed, stage_index, episode).split(STREAM_RESET)


def step_rng(seed: int, stage_index: int, episode: int, step: int) -> Rng:
    return episode_rng(seed, stage_index, episode).split(STREAM_STEP).split(step)


@dataclass(frozen=True, slots=True)
class ChatMessage:
    role: str  # "user" | "assistant"
    text: str
    unavailable: bool = False


@dataclass(slots=True)
class SessionState:
    session_id: str
    experiment_id: str
    experiment_version: int
    condition: str
    seed: int
    progress: StageProgress
    env_state: EnvState | None = None
    frame_id: int = 0  # id the next opened frame will carry; realized steps this stage
    episode_return: float = 0.0
    episode_steps: int = 0
    transcript: tuple[ChatMessage, ...] = ()
    answers: dict[str, dict] = field(default_factory=dict)

    def clone(self) -> "SessionState":
        return replace(self, answers=dict(self.answers))


def new_session_state(
    definition: ExperimentDefinition, session_id: str, seed: int
) -> SessionState:
    condition = definition.assign_condition(seed)
    stages = definition.stages_for_condition(condition)
    return SessionState(
        session_id=session_id,
        experiment_id=definition.experiment_id,
        experiment_version=definition.version,
        condition=condition,
        seed=seed,
        progress=initial_progress(stages),
    )


def seed_for_session(session_id: str) -> int:
    import hashlib

    digest = hashlib.sha256(session_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def ensure_episode_state(state: SessionState, stages: tuple[StageConfig, ...]) -> None:
    """Materialize the env state for the current episode if the fold (or
    a stage transition) left it pending."""
    if state.progress.phase != PHASE_INTERACTING or state.env_state is not None:
        return
    stage = stages[state.progress.stage_index]
    assert isinstance(stage, EnvironmentStage)
    env = get_env(stage.env_kind)
    rng = reset_rng(state.seed, state.progress.stage_index, state.progress.episode_index)
    state.env_state, _ = env.reset(stage.params, rng)
    state.episode_return = 0.0
    state.episode_steps = 0


# --- fold (event-sourced restore) ---

def fold_records(definition: ExperimentDefinition, records: list[Record]) -> SessionState | None:
    """Rebuild one session's state from its ordered records. Returns
    None when the stream holds no session start."""
    state: SessionState | None = None
    stages: tuple[StageConfig, ...] = ()
    for rec in records:
        if isinstance(rec, SessionStartRecord):
            state = SessionState(
                session_id=rec.session_id,
                experiment_id=rec.experiment_id,
                experiment_version=rec.experiment_version,
                condition=rec.condition,
                seed=rec.seed,
                progress=initial_progress(definition.stages_for_condition(rec.condition)),
            )
            stages = definition.stages_for_condition(rec.condition)
            continue
        if state is None:
            continue  # records before a session start cannot be interpreted
        if isinstance(rec, SnapshotRecord):
            state = decode_session_state(rec.payload)
            stages = definition.stages_for_condition(state.condition)
        elif isinstance(rec, StepRecord):
            stage = stages[rec.stage_index]
            assert isinstance(stage, EnvironmentStage)
            env = get_env(stage.env_kind)
            pre = decode_state(rec.pre_state)
            rng = step_rng(state.seed, rec.stage_index, rec.episode, rec.step)
            result = env.step(pre, rec.action, stage.params, rng)
            state.env_state = result.state
            state.frame_id = rec.frame_id + 1
            state.episode_steps = rec.step + 1
            state.episode_return += result.reward
        elif isinstance(rec, EpisodeEndRecord):
            before = state.progress.stage_index
            state.progress = advance(stages, state.progress, EpisodeEnded(rec.episode_return))
            state.env_state = None
            state.episode_return = 0.0
            state.episode_steps = 0
            state.transcript = ()
            if state.progress.stage_index != before or state.progress.phase == PHASE_COMPLETE:
                state.frame_id = 0
        elif isinstance(rec, ContinueRecord):
            state.progress = advance(stages, state.progress, ContinueEvent())
            state.frame_id = 0
            state.transcript = ()
        elif isinstance(rec, FeedbackRecord):
            state.answers[rec.stage_id] = json.loads(rec.answers_json)
            state.progress = advance(stages, state.progress, FeedbackSubmitted())
            state.frame_id = 0
            state.transcript = ()
        elif isinstance(rec, ChatRecord):
            role = "user" if rec.role == CHAT_ROLE_USER else "assistant"
            state.transcript += (ChatMessage(role, rec.text, rec.unavailable),)
    if state is not None:
        ensure_episode_state(state, stages)
    return state


def session_records(records: list[Record], session_id: str) -> list[Record]:
    return [rec for rec in records if rec.session_id == session_id]


# --- snapshot codec ---

def encode_session_state(state: SessionState) -> bytes:
    w = Writer()
    w.u8(SNAPSHOT_CODEC_VERSION)
    w.string(state.session_id)
    w.string(state.experiment_id)
    w.u32(state.experiment_version)
    w.string(state.condition)
    w.u64(state.seed)
    w.u32(state.progress.stage_index)
    w.u32(state.progress.episode_index)
    w.u32(state.progress.successes)
    w.u8(_PHASES.index(state.progress.phase))
    w.blob(encode_state(state.env_state) if state.env_state is not None else b"")
    w.u64(state.frame_id)
    w.f64(state.episode_return)
    w.u32(state.episode_steps)
    w.u16(len(state.transcript))
    for msg in state.transcript:
        w.u8(CHAT_ROLE_USER if msg.role == "user" else CHAT_ROLE_ASSISTANT)
        w.string(msg.text)
        w.boolean(msg.unavailable)
    w.string(json.dumps(state.answers, sort_keys=True, separators=(",", ":"), ensure_ascii=False))
    return w.getvalue()


def decode_session_state(payload: bytes) -> SessionState:
    r = Reader(payload)
    version = r.u8()
    if version != SNAPSHOT_CODEC_VERSION:
        raise CodecError(0, f"unsupported snapshot version {version}")
    session_id = r.string()
    experiment_id = r.string()
    experiment_version = r.u32()
    condition = r.string()
    seed = r.u64()
    progress = StageProgress(
        stage_index=r.u32(),
        episode_index=r.u32(),
        successes=r.u32(),
        phase=_PHASES[r.u8()],
    )
    env_blob = r.blob()
    env_state = decode_state(env_blob) if env_blob else None
    frame_id = r.u64()
    episode_return = r.f64()
    episode_steps = r.u32()
    transcript = tuple(
        ChatMessage(
            role="user" if r.u8() == CHAT_ROLE_USER else "assistant",
            text=r.string(),
            unavailable=r.boolean(),
        )
        for _ in range(r.u16())
    )
    answers = json.loads(r.string())
    r.expect_end()
    return SessionState(
        session_id=session_id,
        experiment_id=experiment_id,
        experiment_version=experiment_version,
        condition=condition,
        seed=seed,
        progress=progress,
        env_state=env_state,
        frame_id=frame_id,
        episode_return=episode_return,
        episode_steps=episode_steps,
        transcript=transcript,
        answers=answers,
    )
