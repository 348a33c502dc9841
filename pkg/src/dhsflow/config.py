"""``key = value`` text configuration files."""
from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_kv(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv(path) -> dict:
    return parse_kv(Path(path).read_text(), str(path))


def write_kv(mapping: dict, path, header: str | None = None) -> None:
    lines = [f"# {header}"] if header else []
    lines += [f"{k} = {v}" for k, v in mapping.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def split_sections(mapping: dict, known: dict) -> dict:
    """Group ``section.key`` entries; ``known`` maps section -> allowed keys.

    Unknown sections or keys raise ``ConfigError``.
    """
    out = {s: {} for s in known}
    for full, value in mapping.items():
        section, _, key = full.partition(".")
        if not key or section not in known:
            raise ConfigError(f"unknown config key {full!r}")
        if key not in known[section]:
            raise ConfigError(f"unknown config key {full!r}")
        out[section][key] = value
    return out
