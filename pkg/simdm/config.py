"""Experiment configuration loading: TOML with a flat ``block.key = value`` fallback."""

import json
import logging
import tomllib
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import ValidationError

from simdm.errors import ConfigError
from simdm.models import ExperimentConfig

logger = logging.getLogger(__name__)


def _parse_flat_value(raw: str) -> Any:
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw.strip("\"'")


def _set_dotted(target: dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = target
    for key in keys[:-1]:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{dotted}: '{key}' is a value, not a block", [dotted])
        node = child
    node[keys[-1]] = value


def parse_flat(text: str) -> dict[str, Any]:
    """
    Parse ``block.key = value`` lines into nested blocks.

    Values are JSON literals when they parse as such, strings otherwise.
    Blank lines and lines starting with '#' are ignored.

    Example:
        parse_flat("run.n = 32\\nlink.kind = sign")
        # {'run': {'n': 32}, 'link': {'kind': 'sign'}}
    """
    data: dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {number}: expected 'block.key = value', got {stripped!r}")
        _set_dotted(data, key, _parse_flat_value(value))
    return data


def parse_config_text(text: str) -> dict[str, Any]:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as toml_error:
        logger.debug(f"not TOML ({toml_error}); trying flat key=value format")
        return parse_flat(text)


def _field_path(loc: tuple) -> str:
    parts = [str(part) for part in loc if not isinstance(part, int)]
    # Discriminated unions insert the tag value ("gmm", ...) into the location.
    if len(parts) >= 2 and parts[0] == "predictor" and parts[1] in ("constant", "gaussian", "gmm"):
        parts.pop(1)
    return ".".join(parts) or "<config>"


def validate_config(data: dict[str, Any]) -> ExperimentConfig:
    """
    Validate raw blocks into an ExperimentConfig.

    Raises:
        ConfigError: With one ``field.path: message`` entry per problem.
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        paths = []
        messages = []
        for error in e.errors():
            path = _field_path(error["loc"])
            paths.append(path)
            messages.append(f"{path}: {error['msg']}")
        raise ConfigError("Invalid configuration: " + "; ".join(messages), paths) from None


def load_config(
    path: Union[str, Path], overrides: Optional[dict[str, Any]] = None
) -> ExperimentConfig:
    """
    Read, override and validate an experiment configuration file.

    Args:
        path: TOML (or flat key=value) file.
        overrides: Dotted keys applied before validation, e.g.
                   ``{"run.base_seed": 7}``. None values are skipped.

    Returns:
        Validated ExperimentConfig.

    Raises:
        ConfigError: If the file cannot be read or fails validation.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    data = parse_config_text(text)
    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(data, dotted, value)
    config = validate_config(data)
    logger.debug(f"loaded config from {path}")
    return config
