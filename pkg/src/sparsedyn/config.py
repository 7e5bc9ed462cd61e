"""Run configuration: INI file, then ``SPARSEDYN_<SECTION>_<KEY>`` environment
variables, then command-line flags, each layer overriding the previous one.

Sections: ``[data]``, ``[model]``, ``[sampler]``, ``[train]``, ``[run]``.
Unknown sections or keys are rejected.
"""
from __future__ import annotations

import configparser
import os
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig
from .train import PROTOCOLS, SamplerConfig, TrainConfig

ENV_PREFIX = "SPARSEDYN_"


@dataclass
class DataConfig:
    input: str | None = None
    format: str = "continuous"
    delimiter: str = ","
    bipartite: bool = False
    num_nodes: int | None = None
    feature_width: int = 32
    node_features: str | None = None

    def validate(self):
        if self.format not in ("continuous", "discrete"):
            raise ConfigError(f"format must be continuous or discrete, got {self.format!r}")


@dataclass
class RunSection:
    protocol: str = "inductive"
    out: str = "out"
    seed: int = 0

    def validate(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    run: RunSection = field(default_factory=RunSection)

    SECTIONS = ("data", "model", "sampler", "train", "run")

    def validate(self):
        for name in self.SECTIONS:
            getattr(self, name).validate()

    def set(self, section: str, key: str, value) -> None:
        if section not in self.SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        target = getattr(self, section)
        types = typing.get_type_hints(type(target))
        if key not in {f.name for f in fields(target)}:
            raise ConfigError(f"unknown config key {section}.{key}")
        if isinstance(value, str):
            value = parse_value(types[key], value, f"{section}.{key}")
        setattr(target, key, value)
        if section == "run" and key == "seed":
            self.model.seed = value

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for name in self.SECTIONS:
            parser[name] = {k: format_value(v) for k, v in asdict(getattr(self, name)).items()}
        lines = []
        for name in self.SECTIONS:
            lines.append(f"[{name}]")
            lines += [f"{k} = {v}" for k, v in parser[name].items()]
            lines.append("")
        return "\n".join(lines)


def format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


def parse_grid(text: str) -> tuple[int, ...]:
    """``lo:hi:step`` (inclusive) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            if step < 1 or lo < 1 or hi < lo:
                raise ValueError
            return tuple(range(lo, hi + 1, step))
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"bad grid {text!r}; expected lo:hi:step or a comma list") from None


def parse_value(tp, text: str, name: str):
    text = text.strip()
    args = typing.get_args(tp)
    optional = type(None) in args
    if optional:
        if text.lower() in ("none", ""):
            return None
        tp = next(a for a in args if a is not type(None))
    if typing.get_origin(tp) is tuple:
        return parse_grid(text)
    try:
        if tp is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {tp.__name__}") from None
    return text


def load_config(path=None, environ=None, overrides: dict | None = None) -> RunConfig:
    """Build the effective configuration. ``overrides`` maps "section.key" to values."""
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(p)
        except configparser.Error as exc:
            raise ConfigError(f"{p}: {exc}") from None
        for section in parser.sections():
            for key, value in parser[section].items():
                cfg.set(section, key, value)
    environ = os.environ if environ is None else environ
    for name, value in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        section, _, key = rest.partition("_")
        cfg.set(section, key, value)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        cfg.set(section, key, value)
    cfg.model.seed = cfg.run.seed
    cfg.validate()
    return cfg
