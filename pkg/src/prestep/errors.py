"""Exception types shared across the package."""

from __future__ import annotations


class PrestepError(Exception):
    """Base class for all package errors."""


class ConfigError(PrestepError):
    """Invalid configuration value. Carries the offending field path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ProtocolError(PrestepError):
    """A request that violates the interaction contract (bad action,
    step on a finished episode, out-of-phase event)."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class StaleActionError(ProtocolError):
    """Action referenced a frame id that is no longer current; the client
    must resync before acting again."""

    def __init__(self, got: int, current: int):
        super().__init__("stale_action", f"frame {got} is stale (current {current})")
        self.got = got
        self.current = current


class EpisodeBoundaryError(ProtocolError):
    """Attempt to open a frame on a finished episode; a reset is required."""

    def __init__(self) -> None:
        super().__init__("episode_boundary", "episode is done; reset required")


class ContractError(PrestepError):
    """An operation was called on an object that does not support it
    (e.g. partner policy on a single-agent environment)."""


class CodecError(PrestepError):
    """Corrupt or truncated binary payload. Carries the byte offset at
    which decoding failed."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"at byte {offset}: {message}")
        self.offset = offset


class ClockAnomalyError(PrestepError):
    """Client timestamps violate t2 >= t1. Carries the (negative) delta so
    the event can still be persisted with an anomaly flag."""

    def __init__(self, delta_ms: float):
        super().__init__(f"t2 precedes t1 by {-delta_ms:.3f} ms")
        self.delta_ms = delta_ms
