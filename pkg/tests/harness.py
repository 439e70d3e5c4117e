"""Shared test drivers: scripted clients, oracles, fault injection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from prestep.envs import encode_state, get_env
from prestep.envs.gridnav import GridNavParams
from prestep.rng import Rng
from prestep.sessions import reset_rng, step_rng
from prestep.server import Outgoing, ServerCore
from prestep.stages import (
    CompletionRule,
    Condition,
    EnvironmentStage,
    ExperimentDefinition,
    FeedbackStage,
    FormSchema,
    InstructionStage,
    LikertInput,
    Question,
)


def gridnav_params(**kwargs) -> GridNavParams:
    defaults = dict(
        width=6, height=6, walls=frozenset({(2, 2), (2, 3), (4, 1)}), goal=(0, 5),
        start_kind="fixed", start_cell=(5, 0), step_limit=25, slip_prob=0.0,
    )
    defaults.update(kwargs)
    return GridNavParams(**defaults)


def build_definition(
    *,
    experiment_id: str = "test-exp",
    env_kind: str = "gridnav",
    params=None,
    max_episodes: int = 3,
    min_successes: int = 1,
    threshold: float = 1.0,
    with_instruction: bool = True,
    with_feedback: bool = True,
    assistant=None,
) -> ExperimentDefinition:
    stages: list = []
    if with_instruction:
        stages.append(InstructionStage(id="intro", body="go"))
    stages.append(EnvironmentStage(
        id="play",
        env_kind=env_kind,
        params=params if params is not None else gridnav_params(),
        completion=CompletionRule(max_episodes, min_successes, threshold),
        assistant=assistant,
    ))
    if with_feedback:
        stages.append(FeedbackStage(id="rate", form=FormSchema((
            Question("fun", "Fun?", LikertInput(1, 5)),
        ))))
    return ExperimentDefinition(
        experiment_id=experiment_id, version=1, title="t", consent="c",
        stages=tuple(stages),
        conditions=(Condition("default", tuple(s.id for s in stages)),),
    )


@dataclass
class StepView:
    """What the client saw for one realized step."""

    frame_id: int
    action: int
    observation: dict
    reward: float
    done: bool


@dataclass
class CoreClient:
    """Scripted participant driving a ServerCore directly (sans-IO)."""

    core: ServerCore
    session_id: str | None = None
    frame: dict | None = None
    view: dict | None = None
    inbox: list[Outgoing] = field(default_factory=list)
    steps: list[StepView] = field(default_factory=list)
    transcript: list[dict] = field(default_factory=list)
    clock: float = 0.0

    def _absorb(self, messages: list[Outgoing]) -> None:
        self.inbox.extend(messages)
        for msg in messages:
            if msg.type == "env_frame":
                self.frame = msg.payload
            elif msg.type == "resync":
                self.view = msg.payload
                self.frame = msg.payload.get("frame")
                self.transcript = list(msg.payload.get("transcript", []))
            elif msg.type == "env_ack" and msg.payload.get("next_frame"):
                self.frame = msg.payload["next_frame"]
            elif msg.type in ("stage_show", "feedback_form"):
                self.view = msg.payload
            elif msg.type == "chat_assistant":
                self.transcript.append({"role": "assistant", **msg.payload})

    def hello(self, session_id: str | None = None, **kwargs) -> list[Outgoing]:
        sid, messages = self.core.hello(session_id or self.session_id, **kwargs)
        if sid is not None:
            self.session_id = sid
        self._absorb(messages)
        return messages

    def send(self, msg_type: str, payload: dict) -> list[Outgoing]:
        messages = self.core.handle(self.session_id, msg_type, payload)
        self._absorb(messages)
        return messages

    def continue_(self) -> list[Outgoing]:
        return self.send("action", {"kind": "continue"})

    def act(self, action: int, *, rt_ms: float = 100.0) -> list[Outgoing]:
        assert self.frame is not None, "no frame cached"
        t1 = self.clock
        t2 = t1 + rt_ms
        self.clock = t2 + 1.0
        frame_id = self.frame["frame_id"]
        painted = self.frame["successors"][str(action)]  # local render, pre-send
        messages = self.send("action", {
            "kind": "env", "frame_id": frame_id, "action": action, "t1": t1, "t2": t2,
        })
        for msg in messages:
            if msg.type == "env_ack":
                # what the client painted is authoritative by protocol soundness
                assert msg.payload["reward"] == painted["reward"]
                assert msg.payload["done"] == painted["done"]
                self.steps.append(StepView(
                    frame_id=frame_id,
                    action=action,
                    observation=painted["observation"],
                    reward=msg.payload["reward"],
                    done=msg.payload["done"],
                ))
        return messages

    def feedback(self, answers: dict) -> list[Outgoing]:
        return self.send("feedback_submit", {"answers": answers})

    def chat(self, text: str) -> list[Outgoing]:
        return self.send("chat_user", {"text": text})

    def phase(self) -> str:
        return self.core.session_snapshot(self.session_id).progress.phase


def run_env_stage_script(
    client: CoreClient, actions: list[int], *, stop_when_phase=("showing", "complete")
) -> list[tuple[float, bool]]:
    """Feed actions until the env stage completes or actions run out.
    Returns the (reward, done) sequence."""
    out = []
    for action in actions:
        if client.frame is None:
            break
        messages = client.act(action)
        ack = next(m.payload for m in messages if m.type == "env_ack")
        out.append((ack["reward"], ack["done"]))
        if client.phase() in stop_when_phase:
            break
    return out


def oracle_trajectory(definition, condition: str, seed: int, stage_index: int, actions: list[int]):
    """Direct sequential stepping with the session's streams: the
    single-session reference every protocol path must reproduce.

    Returns per realized step: (episode, step, pre_state_bytes,
    post_state_bytes, observation, reward, done).
    """
    stage = definition.stages_for_condition(condition)[stage_index]
    env = get_env(stage.env_kind)
    rule = stage.completion
    out = []
    episode = 0
    successes = 0
    step_in_ep = 0
    episode_return = 0.0
    state, _ = env.reset(stage.params, reset_rng(seed, stage_index, episode))
    for action in actions:
        pre = encode_state(state)
        result = env.step(state, action, stage.params, step_rng(seed, stage_index, episode, step_in_ep))
        state = result.state
        episode_return += result.reward
        out.append((episode, step_in_ep, pre, encode_state(state), result.observation, result.reward, result.done))
        step_in_ep += 1
        if result.done:
            if episode_return >= rule.success_return_threshold:
                successes += 1
            episode += 1
            step_in_ep = 0
            episode_return = 0.0
            if successes >= rule.min_successes or episode >= rule.max_episodes:
                break
            state, _ = env.reset(stage.params, reset_rng(seed, stage_index, episode))
    return out


class FaultyDelivery:
    """Seeded duplicate/reorder/drop scheduler for client->server
    messages, used by the network-fault protocol tests."""

    def __init__(self, seed: int, dup_prob=0.15, drop_prob=0.15, reorder_prob=0.2):
        self.gen = np.random.Generator(np.random.Philox(key=seed))
        self.dup_prob = dup_prob
        self.drop_prob = drop_prob
        self.reorder_prob = reorder_prob
        self.pending: list = []

    def offer(self, item) -> list:
        """Returns the items to deliver now, applying faults."""
        deliveries = []
        if self.gen.random() < self.drop_prob:
            pass  # lost
        else:
            copies = 2 if self.gen.random() < self.dup_prob else 1
            deliveries.extend([item] * copies)
        if self.pending and self.gen.random() >= self.reorder_prob:
            deliveries.extend(self.pending)
            self.pending.clear()
        if deliveries and self.gen.random() < self.reorder_prob:
            self.pending.append(deliveries.pop(0))
        return deliveries

    def flush(self) -> list:
        out, self.pending = list(self.pending), []
        return out
