"""Flat ``key = value`` configuration text: parsing and canonical output.

Values are typed on read: booleans (true/false), integers, floats,
comma-separated integer lists, and bare strings. Blank lines and lines
starting with ``#`` are ignored. Formatting is canonical so configs
round-trip byte-identically through checkpoints.
"""

from __future__ import annotations

from .errors import ConfigError


def parse_config_text(text: str) -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        values[key] = _parse_value(val)
    return values


def _parse_value(val: str):
    low = val.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(val)
    except ValueError:
        pass
    try:
        return float(val)
    except ValueError:
        pass
    if "," in val:
        parts = [p.strip() for p in val.split(",")]
        try:
            return [int(p) for p in parts]
        except ValueError:
            pass
    return val


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(int(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(values: dict) -> str:
    """Canonical text: insertion order preserved, one ``key = value`` line each."""
    return "".join(f"{k} = {format_value(v)}\n" for k, v in values.items())
