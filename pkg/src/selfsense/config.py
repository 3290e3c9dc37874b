"""INI configuration: layered loading, strict validation, and round-trippable dumping.

Layers are applied in order: the shipped ``default.ini``, then each file
given, then ``section.key=value`` overrides.  Unknown sections and keys are
errors.  Every violation found is reported in one :class:`ConfigError`.
"""

from __future__ import annotations

import configparser
import dataclasses
from importlib import resources
from pathlib import Path
from typing import Iterable

from .control import ControllerConfig, SuspensionConfig
from .motor import MotorParams
from .signal_chain import InjectionConfig
from .sim import Config, EstimatorConfig, ScenarioConfig

SECTIONS = {
    "motor": MotorParams,
    "injection": InjectionConfig,
    "estimator": EstimatorConfig,
    "suspension": SuspensionConfig,
    "controller": ControllerConfig,
    "scenario": ScenarioConfig,
}
# fields that are fixed or derived rather than configured
_HIDDEN = {("motor", "n_teeth"), ("controller", "dt")}
AUTO = "auto"


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


def default_config_text() -> str:
    return resources.files(__package__).joinpath("default.ini").read_text()


def _fields(section: str) -> dict[str, dataclasses.Field]:
    return {
        f.name: f
        for f in dataclasses.fields(SECTIONS[section])
        if (section, f.name) not in _HIDDEN
    }


def _default(f: dataclasses.Field):
    if f.default is not dataclasses.MISSING:
        return f.default
    return f.default_factory()


def _parse_scalar(text: str, like):
    if isinstance(like, bool):
        raise TypeError("no boolean config values")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


def _parse(text: str, like):
    text = text.strip()
    if like is None:
        return None if text.lower() == AUTO else float(text)
    if isinstance(like, tuple):
        proto = like[0] if like else ""
        return tuple(_parse_scalar(p.strip(), proto) for p in text.split(",") if p.strip())
    return _parse_scalar(text, like)


def _format(value) -> str:
    if value is None:
        return AUTO
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _new_parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    return parser


def _read(parser: configparser.ConfigParser, text: str, source: str) -> None:
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"{source}: {exc}"]) from None


def parse_override(item: str) -> tuple[str, str, str]:
    """Split ``section.key=value``."""
    key, sep, value = item.partition("=")
    section, dot, name = key.strip().partition(".")
    if not sep or not dot or not section or not name:
        raise ConfigError([f"override {item!r} is not of the form section.key=value"])
    return section, name, value.strip()


def load_config(
    paths: Iterable[str | Path] = (),
    overrides: Iterable[str] = (),
    *,
    text: str | None = None,
) -> Config:
    """Build a validated :class:`~selfsense.sim.Config`.

    ``text`` is an extra INI layer applied after the files (used by tests
    and for generated fragments).
    """
    parser = _new_parser()
    _read(parser, default_config_text(), "<default.ini>")
    for path in paths:
        path = Path(path)
        try:
            content = path.read_text()
        except OSError as exc:
            raise ConfigError([f"{path}: {exc.strerror or exc}"]) from None
        _read(parser, content, str(path))
    if text is not None:
        _read(parser, text, "<text>")

    problems: list[str] = []
    for item in overrides:
        section, name, value = parse_override(item)
        if not parser.has_section(section):
            problems.append(f"override {item!r}: unknown section [{section}]")
            continue
        parser.set(section, name, value)

    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            problems.append(f"unknown section [{section}]")
            continue
        known = _fields(section)
        parsed = {}
        for name, raw in parser.items(section):
            if name not in known:
                problems.append(f"unknown key {section}.{name}")
                continue
            like = _default(known[name])
            try:
                parsed[name] = _parse(raw, like)
            except (TypeError, ValueError):
                kind = "float or 'auto'" if like is None else type(like).__name__
                problems.append(f"{section}.{name}: cannot parse {raw!r} as {kind}")
        values[section] = parsed

    if "controller" in values and "control_period" in values.get("scenario", {}):
        values["controller"]["dt"] = values["scenario"]["control_period"]

    built = {}
    for section, cls in SECTIONS.items():
        try:
            built[section] = cls(**values.get(section, {}))
        except ValueError as exc:
            problems.extend(f"{section}.{msg}" for msg in str(exc).split("; "))

    if len(built) == len(SECTIONS):
        cfg = Config(**built)
        problems.extend(cfg.cross_violations())
    if problems:
        raise ConfigError(problems)
    return cfg


def dump_config(cfg: Config, sections: Iterable[str] | None = None) -> str:
    """Serialize ``cfg`` (or some of its sections) as INI text that reloads exactly."""
    out = []
    for section in sections or SECTIONS:
        obj = getattr(cfg, section)
        out.append(f"[{section}]")
        for name in _fields(section):
            out.append(f"{name} = {_format(getattr(obj, name))}")
        out.append("")
    return "\n".join(out)
