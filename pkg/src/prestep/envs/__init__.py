"""Built-in environments and the kind registry."""

from .base import Cell, Environment, EnvState, Observation, StateDescription, StepResult
from .registry import (
    decode_state,
    encode_state,
    env_for_world,
    get_env,
    partner_policy,
    register,
    registered_kinds,
)

__all__ = [
    "Cell",
    "Environment",
    "EnvState",
    "Observation",
    "StateDescription",
    "StepResult",
    "decode_state",
    "encode_state",
    "env_for_world",
    "get_env",
    "partner_policy",
    "register",
    "registered_kinds",
]
