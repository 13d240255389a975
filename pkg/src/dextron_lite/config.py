"""Flat ``key = value`` config files and dataclass overrides.

Nested dataclass fields are addressed with dotted keys, e.g. ``physics.z_trig``.
"""

from __future__ import annotations

import ast
import dataclasses
from pathlib import Path

from .errors import ConfigError


def read_kv(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


def parse_assignments(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _coerce(value, default):
    if not isinstance(value, str):
        return value
    if isinstance(default, bool):
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, (tuple, list)):
        parsed = ast.literal_eval(value)
        return tuple(parsed) if isinstance(parsed, (list, tuple)) else (parsed,)
    if isinstance(default, str):
        return value
    if value.lower() in ("none", "null", ""):
        return None
    try:
        return ast.literal_eval(value)
    except (ValueError, SyntaxError):
        return value


def apply_overrides(cfg, values: dict):
    """Return a copy of dataclass ``cfg`` with ``values`` applied; unknown keys raise."""
    nested: dict[str, dict] = {}
    direct = {}
    names = {f.name for f in dataclasses.fields(cfg)}
    for key, value in values.items():
        head, _, rest = key.partition(".")
        if head not in names:
            raise ConfigError(f"unknown config key {key!r} for {type(cfg).__name__}")
        if rest:
            if not dataclasses.is_dataclass(getattr(cfg, head)):
                raise ConfigError(f"{head!r} has no sub-keys")
            nested.setdefault(head, {})[rest] = value
        else:
            if dataclasses.is_dataclass(getattr(cfg, head)):
                raise ConfigError(f"{head!r} needs a dotted sub-key")
            try:
                direct[head] = _coerce(value, getattr(cfg, head))
            except (ValueError, SyntaxError) as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}") from None
    for head, sub in nested.items():
        direct[head] = apply_overrides(getattr(cfg, head), sub)
    return dataclasses.replace(cfg, **direct)


def flatten(cfg, prefix="") -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            out.update(flatten(v, f"{prefix}{f.name}."))
        else:
            out[f"{prefix}{f.name}"] = v
    return out


def write_kv(path, cfg) -> None:
    items = flatten(cfg) if dataclasses.is_dataclass(cfg) else dict(cfg)
    lines = [f"{k} = {v!r}" if isinstance(v, (tuple, list)) else f"{k} = {v}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(cfg, path=None, overrides=None):
    """Defaults, then the file at ``path``, then ``overrides``."""
    if path is not None:
        cfg = apply_overrides(cfg, read_kv(path))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg
