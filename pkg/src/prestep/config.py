"""Server configuration: YAML file with environment-variable overrides.

Every key can be overridden by a `PRESTEP_*` variable (see `_ENV_KEYS`),
so containerized deployments can keep one config file and vary the rest
per instance.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .savequeue import BackoffPolicy


@dataclass(frozen=True, slots=True)
class ServerConfig:
    experiment: str = "experiment.yaml"
    data_dir: str = "data"
    tcp_listen: str = "127.0.0.1:8766"
    http_listen: str = "127.0.0.1:8765"
    heartbeat_interval_ms: float = 15000.0
    save_queue_capacity: int = 100_000
    backoff_base_ms: float = 100.0
    backoff_jitter: float = 0.5
    backoff_cap_ms: float = 30000.0
    backoff_max_attempts: int = 8
    static_dir: str = ""  # webclient bundle; empty disables static serving

    def backoff_policy(self) -> BackoffPolicy:
        return BackoffPolicy(
            base_ms=self.backoff_base_ms,
            jitter=self.backoff_jitter,
            cap_ms=self.backoff_cap_ms,
            max_attempts=self.backoff_max_attempts,
        )


_FIELD_TYPES = {
    "experiment": str,
    "data_dir": str,
    "tcp_listen": str,
    "http_listen": str,
    "heartbeat_interval_ms": float,
    "save_queue_capacity": int,
    "backoff_base_ms": float,
    "backoff_jitter": float,
    "backoff_cap_ms": float,
    "backoff_max_attempts": int,
    "static_dir": str,
}

_ENV_KEYS = {name: f"PRESTEP_{name.upper()}" for name in _FIELD_TYPES}


def load_server_config(path: str | Path | None = None, env: dict | None = None) -> ServerConfig:
    env = os.environ if env is None else env
    config = ServerConfig()
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(str(path), f"cannot load server config: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(str(path), "server config must be a mapping")
        for key, value in doc.items():
            if key not in _FIELD_TYPES:
                raise ConfigError(key, "unknown server config field")
            config = replace(config, **{key: _FIELD_TYPES[key](value)})
    for name, env_key in _ENV_KEYS.items():
        if env_key in env:
            try:
                config = replace(config, **{name: _FIELD_TYPES[name](env[env_key])})
            except ValueError as exc:
                raise ConfigError(env_key, f"bad override: {exc}") from exc
    if not 0.0 <= config.backoff_jitter < 1.0:
        raise ConfigError("backoff_jitter", "must be in [0, 1)")
    if config.backoff_base_ms <= 0:
        raise ConfigError("backoff_base_ms", "must be positive")
    return config


def parse_listen(listen: str) -> tuple[str, int]:
    host, _, port = listen.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError("listen", f"expected host:port, got {listen!r}")
    return host, int(port)
