"""YAML configuration: load, validate, dump and environment overrides.

Any key can be overridden with an environment variable named
``RLSOCCER__<SECTION>__<KEY>[__<SUBKEY>]``, e.g. ``RLSOCCER__SIM__DT=0.02``.
Override values are parsed as YAML scalars.
"""

from __future__ import annotations

import dataclasses
import enum
import os
from dataclasses import dataclass, field, fields

import yaml

from .geometry import FieldGeometry
from .simulator import ConfigError, Fidelity, FidelityProfile, SimConfig

SCHEMA_VERSION = 1
ENV_PREFIX = "RLSOCCER__"


class ConfigParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


def _sections():
    from .behavior import SelectorConfig
    from .ppo import TrainConfig
    from .rewards import RewardConfig

    return {"reward": RewardConfig, "selector": SelectorConfig, "train": TrainConfig}


@dataclass(frozen=True)
class Config:
    sim: SimConfig = field(default_factory=SimConfig)
    reward: object = None
    selector: object = None
    train: object = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        for name, cls in _sections().items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, cls())

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {self.schema_version}")
        self.sim.validate("sim")
        self.reward.validate("reward")
        self.selector.validate("selector")
        self.train.validate("train")

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "sim": _plain(self.sim), "reward": _plain(self.reward),
                "selector": _plain(self.selector), "train": _plain(self.train)}


def _plain(obj):
    """Dataclass tree to YAML-safe builtins."""
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (frozenset, set)):
        return sorted(_plain(v) for v in obj)
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown key")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        key = f"{path}.{name}"
        if isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(key, "expected true/false")
        elif isinstance(current, (int, float)) and not isinstance(current, enum.Enum):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(key, f"expected a number, got {value!r}")
            if isinstance(current, int) and not isinstance(current, bool) and isinstance(value, float):
                if not value.is_integer():
                    raise ConfigError(key, f"expected an integer, got {value!r}")
                value = int(value)
            elif isinstance(current, float):
                value = float(value)
        elif isinstance(current, tuple):
            value = tuple(value)
        elif isinstance(current, frozenset):
            value = frozenset(value or ())
        kwargs[name] = value
    return cls(**kwargs)


def sim_config_from_dict(data: dict, path: str = "sim") -> SimConfig:
    data = dict(data or {})
    fid = data.pop("fidelity", None)
    geo = data.pop("geometry", None)
    cfg = _build(SimConfig, data, path)
    if fid is not None:
        if isinstance(fid, str):
            try:
                profile = FidelityProfile.named(fid)
            except ValueError:
                raise ConfigError(f"{path}.fidelity", f"unknown fidelity {fid!r}") from None
        else:
            fid = dict(fid)
            name = fid.pop("name", "LOW")
            try:
                name = Fidelity(name)
            except ValueError:
                raise ConfigError(f"{path}.fidelity.name", f"unknown fidelity {name!r}") from None
            profile = dataclasses.replace(_build(FidelityProfile, fid, f"{path}.fidelity"), name=name)
        cfg = dataclasses.replace(cfg, fidelity=profile)
    if geo is not None:
        try:
            geometry = _build(FieldGeometry, geo, f"{path}.geometry")
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"{path}.geometry", str(e)) from None
        cfg = dataclasses.replace(cfg, geometry=geometry)
    return cfg


def config_from_dict(data: dict) -> Config:
    data = dict(data or {})
    version = data.pop("schema_version", SCHEMA_VERSION)
    unknown = sorted(set(data) - {"sim", "reward", "selector", "train"})
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    kwargs = {"schema_version": version}
    if "sim" in data:
        kwargs["sim"] = sim_config_from_dict(data["sim"])
    for name, cls in _sections().items():
        if name in data:
            kwargs[name] = _build(cls, data[name], name)
    cfg = Config(**kwargs)
    cfg.validate()
    return cfg


def apply_env_overrides(data: dict, environ=None) -> dict:
    """Merge ``RLSOCCER__A__B=value`` variables into a nested dict (in place)."""
    environ = os.environ if environ is None else environ
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        parts = [p.lower() for p in name[len(ENV_PREFIX):].split("__") if p]
        if not parts:
            continue
        try:
            value = yaml.safe_load(environ[name])
        except yaml.YAMLError as e:
            raise ConfigParseError(f"cannot parse override: {e}", key=".".join(parts)) from None
        node = data
        for p in parts[:-1]:
            nxt = node.get(p)
            if not isinstance(nxt, dict):
                # a bare fidelity name becomes an explicit profile before overriding a field
                nxt = _plain(FidelityProfile.named(nxt)) if isinstance(nxt, str) else {}
                node[p] = nxt
            node = nxt
        node[parts[-1]] = value
    return data


def parse_yaml(text: str, source: str = "<config>") -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise ConfigParseError(f"{source}: {e.problem}", line=line) from None
    except yaml.YAMLError as e:
        raise ConfigParseError(f"{source}: {e}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigParseError(f"{source}: top level must be a mapping", line=1)
    return data


def load(path=None, environ=None) -> Config:
    """Defaults, then the YAML file (if any), then environment overrides."""
    data = {}
    if path is not None:
        with open(path) as fh:
            data = parse_yaml(fh.read(), str(path))
    apply_env_overrides(data, environ)
    return config_from_dict(data)


def dumps(cfg: Config) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def dump(cfg: Config, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(cfg))
