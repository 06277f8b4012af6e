"""Flat ``key = value`` text files with typed coercion onto dataclasses."""
from __future__ import annotations

import configparser
import dataclasses
import typing
from pathlib import Path

_SECTION = "glickformer"


class ConfigError(ValueError):
    pass


def read_kv(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep key case
    try:
        cp.read_string(f"[{_SECTION}]\n{text}")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    extra = [s for s in cp.sections() if s != _SECTION]
    if extra:
        raise ConfigError(f"{path}: sections are not supported ({extra})")
    return dict(cp[_SECTION])


def format_kv(items: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in items.items())


def write_kv(path, items: dict) -> None:
    Path(path).write_text(format_kv(items), encoding="utf-8")


def _coerce(raw: str, typ):
    origin = typing.get_origin(typ)
    if origin is typing.Union:  # Optional[X]
        args = [a for a in typing.get_args(typ) if a is not type(None)]
        if raw.strip().lower() in ("", "none"):
            return None
        return _coerce(raw, args[0])
    if typ is bool:
        v = raw.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    return raw.strip()


def coerce_fields(cls, raw: dict, strict: bool = True) -> dict:
    """Convert string values to the dataclass field types of ``cls``.

    Unknown keys raise ConfigError when ``strict``; otherwise they are dropped.
    """
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    out = {}
    for k, v in raw.items():
        if k not in names:
            if strict:
                raise ConfigError(f"unknown config key {k!r} for {cls.__name__}")
            continue
        try:
            out[k] = _coerce(v, hints[k]) if isinstance(v, str) else v
        except ValueError as exc:
            raise ConfigError(f"{k}: {exc}") from exc
    return out
