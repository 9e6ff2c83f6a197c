"""JSON run configuration: engine settings plus optional scenario bindings.

Top-level keys are EngineConfig fields. The optional ``"scenario"`` object
selects a catalog entry (``name``), a ``duration`` in seconds and ``error``
overrides for the synthetic error model. Unknown keys are rejected.
"""

from __future__ import annotations

import json
import types
import typing
from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..engine.config import EngineConfig
from ..scenario.synth import ErrorModel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioBinding:
    name: str = "S1"
    duration: float | None = None
    error_overrides: tuple[tuple[str, object], ...] = ()

    def apply(self, error: ErrorModel) -> ErrorModel:
        return replace(error, **dict(self.error_overrides)) if self.error_overrides else error


@dataclass(frozen=True)
class RunConfig:
    engine: EngineConfig
    scenario: ScenarioBinding


def _coerce(where: str, value, hint):
    """Check a JSON value against a dataclass field annotation; lists become tuples."""
    origin = typing.get_origin(hint)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if origin is tuple:
        args = typing.get_args(hint)
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(f"{where}[{i}]", v, args[0]) for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{where}: expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(f"{where}[{i}]", v, a) for i, (v, a) in enumerate(zip(value, args)))
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None and len(args) < len(typing.get_args(hint)):
            return None
        return _coerce(where, value, args[0])
    raise ConfigError(f"{where}: unsupported field type {hint}")


def _fields_from(cls, doc: dict, where: str) -> dict:
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown key(s) " + ", ".join(repr(k) for k in unknown))
    return {k: _coerce(f"{where}.{k}" if where else k, v, hints[k]) for k, v in doc.items()}


def _build(cls, kw: dict, where: str):
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(doc) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    doc = dict(doc)
    sc_doc = doc.pop("scenario", {})
    engine = _build(EngineConfig, _fields_from(EngineConfig, doc, ""), "engine")
    if not isinstance(sc_doc, dict):
        raise ConfigError("scenario: expected an object")
    unknown = sorted(set(sc_doc) - {"name", "duration", "error"})
    if unknown:
        raise ConfigError("scenario: unknown key(s) " + ", ".join(repr(k) for k in unknown))
    name = _coerce("scenario.name", sc_doc.get("name", "S1"), str)
    duration = sc_doc.get("duration")
    if duration is not None:
        duration = _coerce("scenario.duration", duration, float)
        if not duration >= 10.0:
            raise ConfigError(f"scenario.duration must be at least 10 s, got {duration}")
    err_doc = sc_doc.get("error", {})
    if not isinstance(err_doc, dict):
        raise ConfigError("scenario.error: expected an object")
    overrides = _fields_from(ErrorModel, err_doc, "scenario.error")
    _build(ErrorModel, overrides, "scenario.error")
    return RunConfig(engine, ScenarioBinding(name, duration, tuple(sorted(overrides.items()))))


def load_config(path) -> RunConfig:
    """Read and validate a JSON config; missing fields keep their defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, col {exc.colno}: {exc.msg}") from None
    try:
        return parse_config(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
