"""Scenario configuration files: line-oriented ``key = value`` with dotted key paths.

Example::

    master_seed = 7
    fingerprint.rho = 0.3
    band.f_low = 30e6
    fingerprint.resonances = 65e6:4e6, 140e6:4e6, 225e6:4e6
    antenna.positions = 1.0, 2.0, 4.0

Blank lines and ``#`` comments are ignored. Absent keys take their defaults.
"""

from __future__ import annotations

import dataclasses
import typing
from pathlib import Path

from .attack import ScenarioConfig


class ConfigError(ValueError):
    """Schema or value error; the message names the offending key path."""


def _groups():
    return {f.name: f.type for f in dataclasses.fields(ScenarioConfig) if f.name != "master_seed"}


def _group_types():
    hints = typing.get_type_hints(ScenarioConfig)
    return {name: hints[name] for name in _groups()}


def schema() -> dict:
    """Every accepted key path mapped to its default value."""
    out = {"master_seed": 0}
    default = ScenarioConfig()
    for g in _groups():
        for f in dataclasses.fields(getattr(default, g)):
            out[f"{g}.{f.name}"] = getattr(getattr(default, g), f.name)
    return out


def _parse_value(key: str, text: str, hint, default):
    text = text.strip()
    try:
        if key == "fingerprint.resonances":
            pairs = [p.split(":") for p in text.split(",") if p.strip()]
            if any(len(p) != 2 for p in pairs):
                raise ValueError("expected freq:damping pairs")
            return tuple((float(f), float(d)) for f, d in pairs)
        args = typing.get_args(hint)
        if type(None) in args:
            if text.lower() == "none":
                return None
            hint = next(a for a in args if a is not type(None))
        if hint is tuple or typing.get_origin(hint) is tuple:
            conv = type(default[0]) if default else float
            return tuple(conv(v) for v in text.split(",") if v.strip())
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is str:
            return text
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r} ({exc})") from None
    raise ConfigError(f"{key}: unsupported type {hint}")


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{key}: given twice ({source}:{lineno})")
        values[key] = val
    return config_from_items(values)


def config_from_items(values: dict) -> ScenarioConfig:
    """Build a config from ``{dotted_key: string}``; unknown keys are rejected."""
    known = schema()
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    default = ScenarioConfig()
    kwargs = {}
    if "master_seed" in values:
        kwargs["master_seed"] = _parse_value("master_seed", values["master_seed"], int, 0)
    for g, gtype in _group_types().items():
        given = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith(g + ".")}
        if not given:
            continue
        hints = typing.get_type_hints(gtype)
        base = getattr(default, g)
        parsed = {name: _parse_value(f"{g}.{name}", v, hints[name], getattr(base, name))
                  for name, v in given.items()}
        try:
            kwargs[g] = dataclasses.replace(base, **parsed)
        except (ValueError, TypeError) as exc:
            keys = ", ".join(f"{g}.{k}" for k in sorted(given))
            raise ConfigError(f"{keys}: {exc}") from None
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), str(p))


def _format(v) -> str:
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ", ".join(f"{a!r}:{b!r}" for a, b in v)
        return ", ".join(repr(x) for x in v)
    if v is None:
        return "none"
    return repr(v) if isinstance(v, float) else str(v)


def dump_config(cfg: ScenarioConfig) -> str:
    """Effective configuration with every key; reloads to an equal config."""
    lines = [f"master_seed = {cfg.master_seed}"]
    for g in _groups():
        for f in dataclasses.fields(getattr(cfg, g)):
            lines.append(f"{g}.{f.name} = {_format(getattr(getattr(cfg, g), f.name))}")
    return "\n".join(lines) + "\n"
