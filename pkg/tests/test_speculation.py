"""Frame speculation: successor caching, commits, response times."""

import numpy as np
import pytest

from prestep.envs import get_env
from prestep.envs.gridnav import GridNavParams
from prestep.errors import (
    ClockAnomalyError,
    EpisodeBoundaryError,
    ProtocolError,
    StaleActionError,
)
from prestep.rng import Rng
from prestep.sessions import reset_rng, step_rng
from prestep.speculation import ActionEvent, commit_action, open_frame, response_time

env = get_env("gridnav")
PARAMS = GridNavParams(
    width=7, height=7, walls=frozenset({(2, 2), (2, 3)}), goal=(0, 6),
    start_kind="uniform", start_cell=None, step_limit=40, slip_prob=0.25,
)


def test_frame_has_one_successor_per_action():
    state, _ = env.reset(PARAMS, reset_rng(1, 0, 0))
    frame = open_frame(env, PARAMS, state, step_rng(1, 0, 0, 0), frame_id=0)
    assert sorted(frame.successors) == list(range(env.n_actions))


def test_successors_equal_direct_step():
    state, _ = env.reset(PARAMS, reset_rng(1, 0, 0))
    rng = step_rng(1, 0, 0, 0)
    frame = open_frame(env, PARAMS, state, rng, frame_id=0)
    for action in range(env.n_actions):
        assert frame.successors[action] == env.step(state, action, PARAMS, rng)


def test_commit_returns_cached_entry():
    state, _ = env.reset(PARAMS, reset_rng(1, 0, 0))
    frame = open_frame(env, PARAMS, state, step_rng(1, 0, 0, 0), frame_id=0)
    new_state, result = commit_action(frame, ActionEvent(0, 0, t1=1.0, t2=2.0))
    assert result == frame.successors[0]
    assert new_state == frame.successors[0].state


def test_stale_frame_id_rejected():
    state, _ = env.reset(PARAMS, reset_rng(1, 0, 0))
    frame = open_frame(env, PARAMS, state, step_rng(1, 0, 0, 0), frame_id=5)
    with pytest.raises(StaleActionError):
        commit_action(frame, ActionEvent(frame_id=4, action=0, t1=0.0, t2=0.0))


def test_illegal_action_rejected():
    state, _ = env.reset(PARAMS, reset_rng(1, 0, 0))
    frame = open_frame(env, PARAMS, state, step_rng(1, 0, 0, 0), frame_id=0)
    with pytest.raises(ProtocolError):
        commit_action(frame, ActionEvent(frame_id=0, action=99, t1=0.0, t2=0.0))


def test_open_frame_on_done_state_rejected():
    params = GridNavParams(
        width=3, height=3, walls=frozenset(), goal=(0, 1),
        start_kind="fixed", start_cell=(0, 0), step_limit=5,
    )
    state, _ = env.reset(params, reset_rng(1, 0, 0))
    done_state = env.step(state, 3, params, step_rng(1, 0, 0, 0)).state
    assert done_state.done
    with pytest.raises(EpisodeBoundaryError):
        open_frame(env, params, done_state, step_rng(1, 0, 0, 1), frame_id=1)


def test_replay_oracle_1000_steps_with_slip():
    """Random walk through frames (episodes chained) against direct
    sequential stepping under identical streams: bit-identical, and each
    realized transition already sat in the prior frame's successor map."""
    seed = 20_240
    gen = np.random.Generator(np.random.Philox(key=99))
    actions = [int(a) for a in gen.integers(0, env.n_actions, size=1000)]

    def run_via_frames():
        out = []
        stage, episode, step_in_ep, frame_id = 0, 0, 0, 0
        state, _ = env.reset(PARAMS, reset_rng(seed, stage, episode))
        for action in actions:
            frame = open_frame(env, PARAMS, state, step_rng(seed, stage, episode, step_in_ep), frame_id)
            event = ActionEvent(frame_id=frame_id, action=action, t1=0.0, t2=0.0)
            state, result = commit_action(frame, event)
            out.append((state, result.observation, result.reward, result.done))
            frame_id += 1
            step_in_ep += 1
            if result.done:
                episode += 1
                step_in_ep = 0
                state, _ = env.reset(PARAMS, reset_rng(seed, stage, episode))
        return out

    def run_direct():
        out = []
        stage, episode, step_in_ep = 0, 0, 0
        state, _ = env.reset(PARAMS, reset_rng(seed, stage, episode))
        for action in actions:
            result = env.step(state, action, PARAMS, step_rng(seed, stage, episode, step_in_ep))
            state = result.state
            out.append((state, result.observation, result.reward, result.done))
            step_in_ep += 1
            if result.done:
                episode += 1
                step_in_ep = 0
                state, _ = env.reset(PARAMS, reset_rng(seed, stage, episode))
        return out

    assert run_via_frames() == run_direct()


def test_response_time_values():
    assert response_time(ActionEvent(0, 0, t1=1000.0, t2=1350.5)) == 350.5
    assert response_time(ActionEvent(0, 0, t1=123.4, t2=123.4)) == 0.0


def test_response_time_clock_anomaly():
    with pytest.raises(ClockAnomalyError) as exc:
        response_time(ActionEvent(0, 0, t1=100.0, t2=96.5))
    assert exc.value.delta_ms == pytest.approx(-3.5)
