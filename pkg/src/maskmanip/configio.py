"""Plain-text key-value configuration files.

One `key = value` assignment per line; `#` starts a comment; blank lines
ignored. Dots in keys nest sections (`world.delta_xy = 0.06`). Values are
parsed as bool / int / float / string, with commas making a list. Strings
never need quoting; a value that looks like a number is one.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Malformed configuration text."""


def _parse_scalar(raw: str) -> Any:
    text = raw.strip()
    lowered = text.lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _parse_value(raw: str) -> Any:
    if "," in raw:
        return [_parse_scalar(part) for part in raw.split(",") if part.strip()]
    return _parse_scalar(raw)


def parse_config(text: str) -> dict[str, Any]:
    """Parse config text into a (possibly nested) dict."""
    result: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        node = result
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {lineno}: {key!r} nests under a scalar")
        if parts[-1] in node and isinstance(node[parts[-1]], dict):
            raise ConfigError(f"line {lineno}: {key!r} overwrites a section")
        node[parts[-1]] = _parse_value(raw)
    return result


def load_config(path: str | Path) -> dict[str, Any]:
    return parse_config(Path(path).read_text())


def _format_scalar(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def format_config(config: dict[str, Any], prefix: str = "") -> str:
    """Render a nested dict back into config text (stable key order)."""
    lines: list[str] = []
    for key in sorted(config):
        value = config[key]
        full = f"{prefix}{key}"
        if isinstance(value, dict):
            lines.append(format_config(value, prefix=f"{full}."))
        elif isinstance(value, (list, tuple)):
            lines.append(f"{full} = {', '.join(_format_scalar(v) for v in value)}")
        else:
            lines.append(f"{full} = {_format_scalar(value)}")
    return "\n".join(line for line in lines if line)


def save_config(config: dict[str, Any], path: str | Path) -> None:
    Path(path).write_text(format_config(config) + "\n")
