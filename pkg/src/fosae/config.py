"""JSON configuration files merged with command-line overrides."""

from __future__ import annotations

import json
import os
import typing
from dataclasses import fields
from pathlib import Path

from .model import ConfigError, FosaeConfig

SEED_ENV = "FOSAE_SEED"


def _field_types():
    hints = typing.get_type_hints(FosaeConfig)
    return {f.name: hints[f.name] for f in fields(FosaeConfig)}


def _check_type(key, value, expected, source):
    allowed = typing.get_args(expected) or (expected,)
    if value is None and type(None) in allowed:
        return value
    if float in allowed and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, bool) or not isinstance(value, tuple(t for t in allowed if t is not type(None))):
        names = " or ".join("null" if t is type(None) else t.__name__ for t in allowed)
        raise ConfigError(f"{source}: {key}: expected {names}, got {type(value).__name__} {value!r}")
    return value


def check_config_dict(data, source="config"):
    """Validate keys and value types against :class:`FosaeConfig`."""
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    types = _field_types()
    unknown = sorted(set(data) - set(types))
    if unknown:
        raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")
    return {k: _check_type(k, v, types[k], source) for k, v in data.items()}


def load_config_file(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text() or "{}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return check_config_dict(data, str(path))


def default_seed():
    value = os.environ.get(SEED_ENV)
    if value is None or value == "":
        return 0
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}: expected an integer, got {value!r}") from None


def resolve_config(path=None, overrides=None, base=None):
    """Defaults <- ``base`` <- file <- ``overrides`` (None values ignored)."""
    merged = {} if base is None else dict(base)
    if "seed" not in merged:
        merged["seed"] = default_seed()
    if path is not None:
        merged.update(load_config_file(path))
    if overrides:
        merged.update(check_config_dict({k: v for k, v in overrides.items() if v is not None}, "flags"))
    return FosaeConfig.from_dict(merged)


def dump_config(config: FosaeConfig):
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"
