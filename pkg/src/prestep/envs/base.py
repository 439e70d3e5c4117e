"""Environment contract: pure-functional contextual MDPs.

Every environment is a stateless singleton exposing `reset` and `step`
as pure functions over value types. Stepping never mutates its inputs;
it returns fresh values, so states for different participants can be
interleaved arbitrarily with no shared context, and a state can be
serialized, shipped, or replayed at any point.

Randomness is explicit: `reset` and `step` receive an `Rng` value and
must not draw entropy from anywhere else. The caller derives that value
from a path that does not involve the chosen action, which is what makes
precomputing all per-action successors sound: every branch is evaluated
under the same stream, so the realized branch is bit-identical to a
direct sequential step.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, ClassVar

from ..codec import Reader, Writer
from ..errors import ContractError, ProtocolError
from ..rng import Rng

Cell = tuple[int, int]  # (row, col), row 0 at the top


@dataclass(frozen=True, slots=True)
class Observation:
    """What a participant may see: a grid of small tile ids, optional
    overlay text, and an advisory legal-action mask."""

    grid: tuple[tuple[int, ...], ...]
    overlay: str | None
    legal: tuple[bool, ...]

    @property
    def height(self) -> int:
        return len(self.grid)

    @property
    def width(self) -> int:
        return len(self.grid[0]) if self.grid else 0


@dataclass(frozen=True, slots=True)
class EnvState:
    """Complete per-participant environment state.

    `world` is an environment-specific frozen value; `rng` records the
    stream most recently applied to this state so a restored state
    resumes the exact same randomness.
    """

    world: Any
    rng: Rng
    episode_step: int
    done: bool


@dataclass(frozen=True, slots=True)
class StepResult:
    state: EnvState
    observation: Observation
    reward: float
    done: bool


@dataclass(frozen=True, slots=True)
class StateDescription:
    """Ground-truth rendering for a task assistant: the episode goal,
    every object with its identity and location, and the environment
    rules. Never shown to participants directly."""

    goal_text: str
    objects: tuple[tuple[str, Cell], ...]
    rules_text: str

    def render(self) -> str:
        lines = [f"Goal: {self.goal_text}", "Objects:"]
        lines += [f"- {name} at row {r}, column {c}" for name, (r, c) in self.objects]
        lines.append(f"Rules: {self.rules_text}")
        return "\n".join(lines)


class Environment(ABC):
    """Stateless environment definition; see module docstring for the
    purity contract."""

    kind: ClassVar[str]
    n_actions: ClassVar[int]
    action_names: ClassVar[tuple[str, ...]]
    multi_agent: ClassVar[bool] = False

    @abstractmethod
    def validate_params(self, params: Any) -> None:
        """Raise ConfigError naming the offending field if invalid."""

    @abstractmethod
    def params_from_payload(self, payload: dict) -> Any:
        """Decode the experiment-config payload into a params value."""

    @abstractmethod
    def params_to_payload(self, params: Any) -> dict:
        ...

    @abstractmethod
    def reset(self, params: Any, rng: Rng) -> tuple[EnvState, Observation]:
        ...

    @abstractmethod
    def step(self, state: EnvState, action: int, params: Any, rng: Rng) -> StepResult:
        ...

    @abstractmethod
    def observe(self, state: EnvState, params: Any) -> Observation:
        ...

    @abstractmethod
    def encode_world(self, writer: Writer, world: Any) -> None:
        ...

    @abstractmethod
    def decode_world(self, reader: Reader) -> Any:
        ...

    @abstractmethod
    def describe(self, state: EnvState, params: Any) -> StateDescription:
        ...

    def partner_action(self, state: EnvState, params: Any) -> int:
        if not self.multi_agent:
            raise ContractError(f"{self.kind} is single-agent; it has no partner policy")
        raise NotImplementedError

    def check_step_preconditions(self, state: EnvState, action: int) -> None:
        if state.done:
            raise ProtocolError("step_on_done", "cannot step a finished episode")
        if not 0 <= action < self.n_actions:
            raise ProtocolError(
                "illegal_action",
                f"action {action} outside [0, {self.n_actions}) for {self.kind}",
            )
