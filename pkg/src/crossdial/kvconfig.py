"""Flat ``key = value`` config files.

All on-disk configuration in this package (synthetic corpus specs, prompt
template overrides, experiment specs, resolved-config echoes) uses one
format: UTF-8 text, one ``key = value`` entry per line, ``#`` comments,
blank lines ignored.  Keys may be stage-prefixed (``adapt.lr``).  Flat
files keep diffs reviewable and make override semantics trivial.
"""

from __future__ import annotations

import re
from typing import Callable, Mapping


class ConfigError(ValueError):
    """Raised for unparseable files, unknown keys, or bad values."""


def parse_kv_text(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse flat key=value text into an ordered dict of raw strings."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        # trailing comments need whitespace before the '#'
        value = re.split(r"\s#", value, maxsplit=1)[0].strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_kv(path: str) -> dict[str, str]:
    """Load a flat key=value file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_kv_text(text, source=str(path))


def dump_kv(entries: Mapping[str, object]) -> str:
    """Render entries as flat key=value text, one per line, in given order."""
    lines = []
    for key, value in entries.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_kv(path: str, entries: Mapping[str, object]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_kv(entries))


def parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def coerce(
    raw: Mapping[str, str],
    schema: Mapping[str, Callable[[str], object]],
    source: str = "<config>",
) -> dict[str, object]:
    """Convert raw string entries using ``schema``; unknown keys are errors."""
    out: dict[str, object] = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"{source}: unknown config key {key!r}")
        try:
            out[key] = schema[key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {exc}") from None
    return out
