"""Flat, line-oriented run configuration.

Grammar (one assignment per line)::

    # comment (also allowed after a value)
    section.key = value

Keys are dotted paths whose first segment names the section; values are bare
tokens (numbers, names, paths) with surrounding whitespace stripped.  There
are no nested structures, so a resolved configuration can be serialized
canonically on a single line (sorted ``key=value`` pairs joined by ``"; "``)
and embedded as a ``#`` comment in every trace for later re-analysis.
"""

from __future__ import annotations

from typing import Dict, List, Optional


class ConfigError(ValueError):
    """Malformed configuration text or missing/invalid keys."""


def parse_config(text: str) -> Dict[str, str]:
    """Parse config text into a flat key -> raw-value mapping."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key or "." not in key:
            raise ConfigError(f"line {lineno}: key must be 'section.name', got {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        out[key] = value
    return out


def load_config(path: str) -> Dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg: Dict[str, str]) -> str:
    """Canonical one-line form: sorted ``key=value`` joined by '; '."""
    return "; ".join(f"{k}={cfg[k]}" for k in sorted(cfg))


def deserialize_config(line: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for item in line.split("; "):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ConfigError(f"malformed embedded config item {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


class ConfigView:
    """Typed access over the flat mapping with error reporting by key."""

    def __init__(self, data: Dict[str, str]):
        self.data = dict(data)

    def has(self, key: str) -> bool:
        return key in self.data

    def get_str(self, key: str, default: Optional[str] = None) -> str:
        if key in self.data:
            return self.data[key]
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default

    def get_float(self, key: str, default: Optional[float] = None) -> float:
        if key not in self.data:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return default
        try:
            return float(self.data[key])
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: not a number: {self.data[key]!r}") from exc

    def get_int(self, key: str, default: Optional[int] = None) -> int:
        if key not in self.data:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return default
        try:
            return int(self.data[key])
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: not an integer: {self.data[key]!r}") from exc

    def get_float_list(self, key: str) -> List[float]:
        raw = self.get_str(key)
        try:
            return [float(tok) for tok in raw.split(",") if tok.strip()]
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: not a number list: {raw!r}") from exc

    def section(self, name: str) -> Dict[str, str]:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.data.items() if k.startswith(prefix)}
