"""Flat ``key=value`` run configuration covering data, model and training settings.

Keys carry a section prefix: ``data.`` (synthetic generator), ``model.`` and
``train.``. Lines may hold ``#`` comments. Unknown keys are errors.
"""
from __future__ import annotations

import hashlib
import typing
from dataclasses import dataclass, fields

from .models import ModelConfig
from .synth import SynthSpec
from .trainer import TrainConfig

SECTIONS = {"data": SynthSpec, "model": ModelConfig, "train": TrainConfig}


class ConfigError(ValueError):
    pass


def all_keys() -> list[str]:
    return [f"{section}.{f.name}" for section, cls in SECTIONS.items() for f in fields(cls)]


def _field_types(cls) -> dict[str, object]:
    return typing.get_type_hints(cls)


def _convert(key: str, raw: str, kind):
    raw = raw.strip()
    origin = typing.get_origin(kind)
    args = typing.get_args(kind)
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if origin is typing.Union or str(origin) == "<class 'types.UnionType'>":
            if raw.lower() == "none" and type(None) in args:
                return None
            inner = [a for a in args if a is not type(None)][0]
            return _convert(key, raw, inner)
        if origin is tuple:
            return tuple(int(v) for v in raw.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(kind, '__name__', kind)}") from exc
    raise ConfigError(f"{key}: unsupported field type {kind}")


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def parse_pairs(text: str, source: str = "config") -> dict[str, str]:
    known = set(all_keys())
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs


def parse_overrides(items: list[str] | None) -> dict[str, str]:
    return parse_pairs("\n".join(items or []), "--set")


@dataclass
class RunConfig:
    data: SynthSpec
    model: ModelConfig
    train: TrainConfig
    explicit: frozenset = frozenset()

    def text(self) -> str:
        lines = []
        for section in SECTIONS:
            obj = getattr(self, section)
            for f in fields(obj):
                lines.append(f"{section}.{f.name}={_format(getattr(obj, f.name))}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()

    def with_model(self, **changes) -> "RunConfig":
        return RunConfig(self.data, self.model.replace(**changes), self.train, self.explicit)


def resolve(pairs: dict[str, str], model_base: dict | None = None) -> RunConfig:
    """Build typed sections; ``model_base`` supplies defaults below explicit keys."""
    values = {s: {} for s in SECTIONS}
    for key, raw in pairs.items():
        section, name = key.split(".", 1)
        values[section][name] = _convert(key, raw, _field_types(SECTIONS[section])[name])
    model_values = dict(model_base or {})
    model_values.update(values["model"])
    try:
        return RunConfig(SynthSpec(**values["data"]), ModelConfig(**model_values), TrainConfig(**values["train"]),
                         frozenset(pairs))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load(path=None, overrides: list[str] | None = None, model_base: dict | None = None) -> tuple[RunConfig, str]:
    """Resolve a config file plus ``--set`` overrides; returns the config and the raw merged text."""
    text = ""
    if path is not None:
        with open(path) as fh:
            text = fh.read()
    pairs = parse_pairs(text, str(path or "config"))
    pairs.update(parse_overrides(overrides))
    raw = "".join(f"{k}={v}\n" for k, v in pairs.items())
    return resolve(pairs, model_base), raw
