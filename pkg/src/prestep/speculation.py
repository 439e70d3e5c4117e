"""Per-step speculation: compute every action's successor before the
participant acts.

After each realized step the server runs `open_frame`, which steps the
environment once per action under a single action-independent random
stream and caches all the results. The client gets only the successor
observations (plus reward and done), so when a key is pressed it can
paint the outcome locally; the server then resolves the action with
`commit_action`, a pure cache lookup. Because every branch was computed
under the same stream, the committed result is bit-identical to what
direct sequential stepping would have produced.

Successor states never leave the server; participants in asymmetric-
information experiments must not be able to inspect hidden state by
reading their own network traffic.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

from .envs import Environment, EnvState, Observation, StepResult
from .errors import ClockAnomalyError, EpisodeBoundaryError, ProtocolError, StaleActionError
from .rng import Rng


@dataclass(frozen=True, slots=True)
class SpeculativeFrame:
    """One step's bundle: the current observation plus a successor per
    action. Frame ids increase by one per realized step within a stage."""

    frame_id: int
    observation: Observation
    successors: Mapping[int, StepResult]
    created_wall_ms: float


@dataclass(frozen=True, slots=True)
class ActionEvent:
    """A participant's action with the client's render (t1) and act (t2)
    timestamps, both from one monotonic clock."""

    frame_id: int
    action: int
    t1: float
    t2: float


def open_frame(
    env: Environment,
    params: object,
    state: EnvState,
    step_rng: Rng,
    frame_id: int,
    wall_ms: float = 0.0,
) -> SpeculativeFrame:
    """Compute all successors of `state` under one shared step stream.

    `step_rng` must be derived without reference to any action (the
    session layer keys it by stage/episode/step indices only); that is
    what makes the cached branches exact.
    """
    if state.done:
        raise EpisodeBoundaryError()
    successors = {
        action: env.step(state, action, params, step_rng)
        for action in range(env.n_actions)
    }
    return SpeculativeFrame(
        frame_id=frame_id,
        observation=env.observe(state, params),
        successors=MappingProxyType(successors),
        created_wall_ms=wall_ms,
    )


def commit_action(frame: SpeculativeFrame, event: ActionEvent) -> tuple[EnvState, StepResult]:
    """Resolve an action against its frame: pure lookup, no stepping.

    A mismatched frame id means the client acted on an outdated view
    (reconnect race or duplicate delivery); the caller answers with a
    resync rather than re-stepping.
    """
    if event.frame_id != frame.frame_id:
        raise StaleActionError(got=event.frame_id, current=frame.frame_id)
    if event.action not in frame.successors:
        raise ProtocolError(
            "illegal_action",
            f"action {event.action} not in frame {frame.frame_id}'s successor map",
        )
    result = frame.successors[event.action]
    return result.state, result


def response_time(event: ActionEvent) -> float:
    """Response time in ms (t2 - t1). Raises ClockAnomalyError carrying
    the negative delta when t2 < t1; the caller persists the event with
    an anomaly flag instead of dropping it."""
    delta = event.t2 - event.t1
    if delta < 0:
        raise ClockAnomalyError(delta)
    return delta
