"""GridNav: single-agent navigation on a small walled grid.

Actions: 0=up, 1=down, 2=left, 3=right, 4=stay. A move into a wall or
off the grid leaves the agent in place (and the mask marks it illegal,
purely as a UI hint). Entering the goal cell pays `goal_reward` and ends
the episode; hitting `step_limit` ends it with no reward. With
`slip_prob` > 0 a move is randomly rotated 90 degrees, drawing from the
caller-supplied step stream.

Tile ids: 0 floor, 1 wall, 2 goal, 3 agent. When `show_goal` is false
the goal renders as floor, for asymmetric-information studies where only
an assistant knows the target.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..codec import Reader, Writer
from ..errors import ConfigError
from ..rng import Rng
from .base import Cell, Environment, EnvState, Observation, StateDescription, StepResult

FLOOR, WALL, GOAL, AGENT = 0, 1, 2, 3

UP, DOWN, LEFT, RIGHT, STAY = 0, 1, 2, 3, 4
_DELTAS = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1), STAY: (0, 0)}
# rotate a move action left/right by 90 degrees (slip outcomes)
_ROTATIONS = {UP: (LEFT, RIGHT), DOWN: (RIGHT, LEFT), LEFT: (DOWN, UP), RIGHT: (UP, DOWN)}

START_FIXED = "fixed"
START_UNIFORM = "uniform"


@dataclass(frozen=True, slots=True)
class GridNavParams:
    width: int
    height: int
    walls: frozenset[Cell]
    goal: Cell
    start_kind: str  # "fixed" | "uniform"
    start_cell: Cell | None
    goal_reward: float = 1.0
    step_limit: int = 100
    slip_prob: float = 0.0
    show_goal: bool = True


@dataclass(frozen=True, slots=True)
class GridNavWorld:
    agent: Cell


def _start_candidates(params: GridNavParams) -> list[Cell]:
    """Non-wall cells excluding the goal, in row-major order."""
    return [
        (r, c)
        for r in range(params.height)
        for c in range(params.width)
        if (r, c) not in params.walls and (r, c) != params.goal
    ]


class GridNav(Environment):
    kind = "gridnav"
    n_actions = 5
    action_names = ("up", "down", "left", "right", "stay")

    def validate_params(self, params: GridNavParams) -> None:
        if params.width < 2 or params.height < 2:
            raise ConfigError("width/height", "grid must be at least 2x2")
        for r, c in params.walls:
            if not (0 <= r < params.height and 0 <= c < params.width):
                raise ConfigError("walls", f"wall {(r, c)} outside the grid")
        gr, gc = params.goal
        if not (0 <= gr < params.height and 0 <= gc < params.width):
            raise ConfigError("goal", f"goal {params.goal} outside the grid")
        if params.goal in params.walls:
            raise ConfigError("goal", f"goal {params.goal} is inside a wall")
        if params.start_kind == START_FIXED:
            if params.start_cell is None:
                raise ConfigError("start.cell", "fixed start requires a cell")
            sr, sc = params.start_cell
            if not (0 <= sr < params.height and 0 <= sc < params.width):
                raise ConfigError("start.cell", f"start {params.start_cell} outside the grid")
            if params.start_cell in params.walls:
                raise ConfigError("start.cell", f"start {params.start_cell} is inside a wall")
            if params.start_cell == params.goal:
                raise ConfigError("start.cell", "start cell equals the goal")
        elif params.start_kind == START_UNIFORM:
            if not _start_candidates(params):
                raise ConfigError("start", "no non-wall start cells available")
        else:
            raise ConfigError("start.kind", f"unknown start kind {params.start_kind!r}")
        if not 0.0 <= params.slip_prob < 1.0:
            raise ConfigError("slip_prob", "must be in [0, 1)")
        if params.step_limit < 1:
            raise ConfigError("step_limit", "must be at least 1")

    def params_from_payload(self, payload: dict) -> GridNavParams:
        known = {
            "width", "height", "walls", "goal", "start",
            "goal_reward", "step_limit", "slip_prob", "show_goal",
        }
        for key in payload:
            if key not in known:
                raise ConfigError(f"params.{key}", "unknown field")
        try:
            start = payload.get("start", {"kind": START_UNIFORM})
            start_kind = start["kind"]
            start_cell = tuple(start["cell"]) if "cell" in start else None
            return GridNavParams(
                width=int(payload["width"]),
                height=int(payload["height"]),
                walls=frozenset(tuple(w) for w in payload.get("walls", [])),
                goal=tuple(payload["goal"]),
                start_kind=start_kind,
                start_cell=start_cell,
                goal_reward=float(payload.get("goal_reward", 1.0)),
                step_limit=int(payload.get("step_limit", 100)),
                slip_prob=float(payload.get("slip_prob", 0.0)),
                show_goal=bool(payload.get("show_goal", True)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("params", f"malformed gridnav params: {exc}") from exc

    def params_to_payload(self, params: GridNavParams) -> dict:
        start: dict = {"kind": params.start_kind}
        if params.start_cell is not None:
            start["cell"] = list(params.start_cell)
        return {
            "width": params.width,
            "height": params.height,
            "walls": [list(w) for w in sorted(params.walls)],
            "goal": list(params.goal),
            "start": start,
            "goal_reward": params.goal_reward,
            "step_limit": params.step_limit,
            "slip_prob": params.slip_prob,
            "show_goal": params.show_goal,
        }

    def reset(self, params: GridNavParams, rng: Rng) -> tuple[EnvState, Observation]:
        self.validate_params(params)
        if params.start_kind == START_FIXED:
            agent = params.start_cell
        else:
            candidates = _start_candidates(params)
            agent = candidates[rng.randint(len(candidates))]
        state = EnvState(world=GridNavWorld(agent=agent), rng=rng, episode_step=0, done=False)
        return state, self.observe(state, params)

    def step(self, state: EnvState, action: int, params: GridNavParams, rng: Rng) -> StepResult:
        self.check_step_preconditions(state, action)
        effective = action
        if action != STAY and params.slip_prob > 0.0:
            gen = rng.generator()
            if gen.random() < params.slip_prob:
                effective = _ROTATIONS[action][int(gen.integers(0, 2))]
        agent = self._move(state.world.agent, effective, params)
        reached_goal = agent == params.goal
        next_step = state.episode_step + 1
        done = reached_goal or next_step >= params.step_limit
        next_state = EnvState(
            world=GridNavWorld(agent=agent),
            rng=rng,
            episode_step=next_step,
            done=done,
        )
        return StepResult(
            state=next_state,
            observation=self.observe(next_state, params),
            reward=params.goal_reward if reached_goal else 0.0,
            done=done,
        )

    def _move(self, agent: Cell, action: int, params: GridNavParams) -> Cell:
        dr, dc = _DELTAS[action]
        target = (agent[0] + dr, agent[1] + dc)
        if not (0 <= target[0] < params.height and 0 <= target[1] < params.width):
            return agent
        if target in params.walls:
            return agent
        return target

    def observe(self, state: EnvState, params: GridNavParams) -> Observation:
        agent = state.world.agent
        grid = []
        for r in range(params.height):
            row = []
            for c in range(params.width):
                if (r, c) == agent:
                    row.append(AGENT)
                elif (r, c) in params.walls:
                    row.append(WALL)
                elif (r, c) == params.goal and params.show_goal:
                    row.append(GOAL)
                else:
                    row.append(FLOOR)
            grid.append(tuple(row))
        legal = tuple(
            action == STAY or self._move(agent, action, params) != agent
            for action in range(self.n_actions)
        )
        return Observation(grid=tuple(grid), overlay=None, legal=legal)

    def encode_world(self, writer: Writer, world: GridNavWorld) -> None:
        writer.u16(world.agent[0])
        writer.u16(world.agent[1])

    def decode_world(self, reader: Reader) -> GridNavWorld:
        return GridNavWorld(agent=(reader.u16(), reader.u16()))

    def describe(self, state: EnvState, params: GridNavParams) -> StateDescription:
        gr, gc = params.goal
        objects: list[tuple[str, Cell]] = [
            ("agent", state.world.agent),
            ("goal", params.goal),
        ]
        objects += [("wall", w) for w in sorted(params.walls)]
        return StateDescription(
            goal_text=f"reach the goal at row {gr}, column {gc}",
            objects=tuple(objects),
            rules_text=(
                "Move up/down/left/right on floor cells; walls and grid edges block. "
                f"Entering the goal pays {params.goal_reward:g} and ends the episode; "
                f"the episode also ends after {params.step_limit} steps."
            ),
        )


def shortest_path_actions(params: GridNavParams, start: Cell) -> list[int] | None:
    """Breadth-first optimal action sequence from `start` to the goal,
    or None when unreachable. Used by operators composing experiments
    and by tests as an independent oracle's counterpart."""
    from collections import deque

    env = GridNav()
    if start == params.goal:
        return []
    parents: dict[Cell, tuple[Cell, int]] = {}
    seen = {start}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        for action in (UP, DOWN, LEFT, RIGHT):
            nxt = env._move(cell, action, params)
            if nxt == cell or nxt in seen:
                continue
            seen.add(nxt)
            parents[nxt] = (cell, action)
            if nxt == params.goal:
                actions: list[int] = []
                cur = nxt
                while cur != start:
                    prev, act = parents[cur]
                    actions.append(act)
                    cur = prev
                actions.reverse()
                return actions
            queue.append(nxt)
    return None
