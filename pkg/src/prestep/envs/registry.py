"""Environment registry and the canonical state codec envelope.

Environments are addressed by a string kind id. Encoded states are
self-describing: a version byte, the kind, the environment-specific
world payload, then the rng position, step index, and done flag, all as
tagged little-endian fields. See docs/state-codec.md for the byte-level
layout of each environment's world payload.
"""

from __future__ import annotations

from ..codec import Reader, Writer
from ..errors import CodecError, ConfigError
from ..rng import Rng
from .base import Environment, EnvState
from .gridnav import GridNav
from .twocooks import TwoCooks

STATE_CODEC_VERSION = 1

_TAG_KIND = 1
_TAG_WORLD = 2
_TAG_RNG = 3
_TAG_STEP = 4
_TAG_DONE = 5

_REGISTRY: dict[str, Environment] = {}


def register(env: Environment) -> Environment:
    if env.kind in _REGISTRY:
        raise ValueError(f"environment kind {env.kind!r} already registered")
    _REGISTRY[env.kind] = env
    return env


def get_env(kind: str) -> Environment:
    try:
        return _REGISTRY[kind]
    except KeyError:
        raise ConfigError("env", f"unknown environment kind {kind!r}") from None


def registered_kinds() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def env_for_world(world: object) -> Environment:
    for env in _REGISTRY.values():
        if isinstance(world, _world_cls(env)):
            return env
    raise ConfigError("state", f"no environment registered for world type {type(world).__name__}")


def _world_cls(env: Environment) -> type:
    # worlds are produced only by reset/step, so probing one is cheap
    from .gridnav import GridNavWorld
    from .twocooks import TwoCooksWorld

    return {"gridnav": GridNavWorld, "twocooks": TwoCooksWorld}[env.kind]


def partner_policy(state: EnvState, params: object) -> int:
    """Embedded-partner action for two-agent environments; ContractError
    on single-agent kinds."""
    return env_for_world(state.world).partner_action(state, params)


def encode_state(state: EnvState) -> bytes:
    """Canonical bytes for a state: equal states encode equal bytes."""
    env = env_for_world(state.world)
    writer = Writer()
    writer.u8(STATE_CODEC_VERSION)
    writer.tag(_TAG_KIND)
    writer.string(env.kind)
    writer.tag(_TAG_WORLD)
    world_writer = Writer()
    env.encode_world(world_writer, state.world)
    writer.blob(world_writer.getvalue())
    writer.tag(_TAG_RNG)
    writer.u64(state.rng.seed)
    writer.u16(len(state.rng.path))
    for label in state.rng.path:
        writer.u64(label)
    writer.tag(_TAG_STEP)
    writer.u32(state.episode_step)
    writer.tag(_TAG_DONE)
    writer.boolean(state.done)
    return writer.getvalue()


def decode_state(data: bytes) -> EnvState:
    reader = Reader(data)
    version = reader.u8()
    if version != STATE_CODEC_VERSION:
        raise CodecError(0, f"unsupported state codec version {version}")
    reader.expect_tag(_TAG_KIND, "kind")
    kind = reader.string()
    if kind not in _REGISTRY:
        raise CodecError(reader.offset, f"unknown environment kind {kind!r}")
    env = _REGISTRY[kind]
    reader.expect_tag(_TAG_WORLD, "world")
    world_blob = reader.blob()
    world_reader = Reader(world_blob)
    world = env.decode_world(world_reader)
    world_reader.expect_end()
    reader.expect_tag(_TAG_RNG, "rng")
    seed = reader.u64()
    path = tuple(reader.u64() for _ in range(reader.u16()))
    reader.expect_tag(_TAG_STEP, "episode_step")
    episode_step = reader.u32()
    reader.expect_tag(_TAG_DONE, "done")
    done = reader.boolean()
    reader.expect_end()
    return EnvState(world=world, rng=Rng(seed, path), episode_step=episode_step, done=done)


register(GridNav())
register(TwoCooks())
