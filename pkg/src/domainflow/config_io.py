"""Flat key-value config files with typed parsing and strict unknown-key checks.

Format: one ``key = value`` per line, ``#`` comments.  Values are parsed
against the declared dataclass field types; precedence is defaults < file <
command-line overrides, and the fully resolved document is echoed back to the
run directory before execution.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_kv_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _convert(raw: str, ftype):
    if ftype is bool or ftype == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if ftype is int or ftype == "int":
        return int(raw)
    if ftype is float or ftype == "float":
        return float(raw)
    if ftype is str or ftype == "str":
        return raw
    # optional / union fields declared as strings under postponed annotations
    t = str(ftype)
    if "tuple" in t:
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    if raw.lower() in ("none", ""):
        return None
    if "int" in t:
        return int(raw)
    if "float" in t:
        return float(raw)
    return raw


def apply_to_dataclass(cls, values: dict, extra_keys=(), where="config"):
    """Build cls from string values; reject keys that match no field."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    extras = {}
    for key, raw in values.items():
        if key in fields:
            try:
                kwargs[key] = _convert(raw, fields[key].type) if isinstance(raw, str) else raw
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from exc
        elif key in extra_keys:
            extras[key] = raw
        else:
            known = sorted(list(fields) + list(extra_keys))
            raise ConfigError(f"{where}: unknown key {key!r} (known keys: {', '.join(known)})")
    try:
        return cls(**kwargs), extras
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def resolve(cls, file_path=None, overrides=None, extra_keys=(), defaults=None):
    """defaults < file < overrides; returns (instance, extras dict)."""
    merged = dict(defaults or {})
    if file_path is not None:
        merged.update(parse_kv_text(Path(file_path).read_text()))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, value = item.split("=", 1)
        merged[key.strip()] = value.strip()
    return apply_to_dataclass(cls, merged, extra_keys=extra_keys)


def snapshot_text(instance, extras: dict | None = None) -> str:
    lines = []
    for f in dataclasses.fields(instance):
        v = getattr(instance, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    for k, v in (extras or {}).items():
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
