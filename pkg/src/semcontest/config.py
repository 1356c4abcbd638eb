"""TOML experiment configuration with ``[env]`` and ``[agent]`` tables."""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .drl import AgentConfig
from .env import EnvConfig
from .errors import ConfigError, ParameterError

SECTIONS = ("env", "agent")


def _build(cls, section: str, values: dict):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    try:
        return cls(**values)
    except (ParameterError, TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def parse_config(data: dict) -> tuple:
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    for name in SECTIONS:
        if not isinstance(data.get(name, {}), dict):
            raise ConfigError(f"[{name}] must be a table")
    return (_build(EnvConfig, "env", data.get("env", {})),
            _build(AgentConfig, "agent", data.get("agent", {})))


def load_config(path=None) -> tuple:
    """``(EnvConfig, AgentConfig)`` from a TOML file, or the defaults when ``path`` is None."""
    if path is None:
        return EnvConfig(), AgentConfig()
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
    return parse_config(data)


def config_hash(env_config: EnvConfig, agent_config: AgentConfig) -> str:
    blob = json.dumps({"env": asdict(env_config), "agent": asdict(agent_config)},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
