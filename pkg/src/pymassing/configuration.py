from logging import getLogger
from pathlib import Path
from typing import Any, Dict

import msgspec

import pymassing.defaults
from pymassing.defaults import SCHEMA_VERSION, RunConfig, Scale
from pymassing.errors import ConfigError, StorageError

logger = getLogger(__name__)

_config: RunConfig = pymassing.defaults.desk()


def get_config() -> RunConfig:
    return _config


def set_config(config: RunConfig) -> None:
    global _config
    _config = config


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: str | Path | None = None, scale: Scale | None = None, seed: int | None = None) -> RunConfig:
    """
    Reads a JSON config file on top of the scale preset and makes it the active config.
    Sections missing from the file keep the preset values, --scale and --seed override the file.
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        try:
            raw = msgspec.json.decode(Path(path).read_bytes())
        except OSError as e:
            raise StorageError(f"Can not read config {path}: {e}") from e
        except msgspec.DecodeError as e:
            raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"Config {path} must be a JSON object")
        if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"Unsupported config schema version {raw.get('schema_version')}, expected {SCHEMA_VERSION}")

    chosen: Scale = scale or raw.get("scale", "desk")
    try:
        base = msgspec.to_builtins(pymassing.defaults.preset(chosen))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    merged = _merge(base, raw)
    merged["scale"] = base["scale"]
    if seed is not None:
        merged["seed"] = seed

    try:
        config = msgspec.convert(merged, type=RunConfig)
    except msgspec.ValidationError as e:
        raise ConfigError(f"Invalid config: {e}") from e
    logger.debug("Loaded %s config from %s", chosen, path)
    set_config(config)
    return config


def dump_config(config: RunConfig) -> bytes:
    return msgspec.json.format(msgspec.json.encode(config), indent=2)
