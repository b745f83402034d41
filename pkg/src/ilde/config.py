"""Experiment configuration: schema, validation, parsing and emission.

A config file is in the ``key = <JSON value>`` format of :mod:`ilde.kvformat`
with dotted keys grouped into sections::

    algorithm = "ilde_practical"
    env.kind = "gridworld"
    env.horizon = 8
    demo.tremble_prob = [0.01, 0.1, 0.3]
    practical.T = 200

Unknown keys are rejected; every omitted key takes its default.
"""

from __future__ import annotations

import hashlib
import math
import types
import typing
from dataclasses import dataclass, field, fields, replace

from . import kvformat
from .envs import EXPERT_EPSILON
from .function_class import BonusConfig
from .npg import NpgConfig
from .practical import CURIOSITY_BACKENDS, VARIANTS, PracticalConfig

ALGORITHMS = ("ilde_npg", "ilde_practical")
ENV_KINDS = ("gridworld", "river_swim", "chain")
# size keys each environment builder accepts
ENV_KEYS = {
    "gridworld": ("rows", "cols", "horizon", "slip", "num_hazards"),
    "river_swim": ("num_states", "horizon", "small_reward"),
    "chain": ("num_states", "horizon"),
}


class ConfigError(ValueError):
    """A config value violates the schema; ``field`` names the offending key."""

    def __init__(self, field_name, message):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class EnvSpec:
    kind: str = "gridworld"
    seed: int = 0
    expert_epsilon: float = EXPERT_EPSILON
    rows: int | None = None
    cols: int | None = None
    num_states: int | None = None
    horizon: int | None = None
    slip: float | None = None
    num_hazards: int | None = None
    small_reward: float | None = None

    def size(self) -> dict:
        return {k: getattr(self, k) for k in ENV_KEYS[self.kind] if getattr(self, k) is not None}


@dataclass(frozen=True)
class DemoSpec:
    n: int = 1
    truncation_fraction: float = 0.1
    tremble_prob: tuple = (0.0,)


@dataclass(frozen=True)
class NpgSpec:
    K: int = 200
    m: int = 1
    N: int = 50
    eta: float | None = None
    eta_theta: float | None = None
    lam: float = 0.0
    ratio_clip: float = 10.0
    reward_radius: float = 1.0
    curiosity_smoothing: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "ilde_practical"
    variant: str = "full"
    seeds: tuple = (0,)
    output_dir: str | None = None
    env: EnvSpec = field(default_factory=EnvSpec)
    demo: DemoSpec = field(default_factory=DemoSpec)
    practical: PracticalConfig = field(default_factory=PracticalConfig)
    npg: NpgSpec = field(default_factory=NpgSpec)
    bonus: BonusConfig = field(default_factory=BonusConfig)

    def npg_config(self, seed) -> NpgConfig:
        n = self.npg
        return NpgConfig(K=n.K, m=n.m, N=n.N, eta=n.eta, eta_theta=n.eta_theta, lam=n.lam, bonus=self.bonus,
                         ratio_clip=n.ratio_clip, reward_radius=n.reward_radius, rng_seed=seed)

    def practical_config(self, seed) -> PracticalConfig:
        return replace(self.practical, rng_seed=seed)

    def with_overrides(self, **kw) -> ExperimentConfig:
        cfg = replace(self, **{k: v for k, v in kw.items() if v is not None})
        validate(cfg)
        return cfg


SECTIONS = {"env": EnvSpec, "demo": DemoSpec, "practical": PracticalConfig, "npg": NpgSpec, "bonus": BonusConfig}
# per-seed fields that the runner sets itself
_HIDDEN = {("practical", "rng_seed")}


def _section_fields(name):
    return [f for f in fields(SECTIONS[name]) if (name, f.name) not in _HIDDEN]


def _hints(cls):
    return typing.get_type_hints(cls)


def _coerce(key, hint, value):
    """Check ``value`` against a simple annotation; ints are accepted for floats."""
    optional = False
    if isinstance(hint, types.UnionType) or typing.get_origin(hint) is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        optional = len(args) < len(typing.get_args(hint))
        hint = args[0]
    if value is None:
        if optional:
            return None
        raise ConfigError(key, "must not be null")
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true or false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(key, "must be finite")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported annotation for {key}")


def _build_section(name, values: dict):
    cls = SECTIONS[name]
    hints = _hints(cls)
    kwargs = {}
    for f in _section_fields(name):
        if f.name not in values:
            continue
        key = f"{name}.{f.name}"
        raw = values[f.name]
        if name == "demo" and f.name == "tremble_prob":
            items = raw if isinstance(raw, list) else [raw]
            if not items:
                raise ConfigError(key, "needs at least one level")
            kwargs[f.name] = tuple(_coerce(key, float, v) for v in items)
        else:
            kwargs[f.name] = _coerce(key, hints[f.name], raw)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(_guess_field(name, str(exc)), str(exc)) from None


def _guess_field(section, message):
    for f in _section_fields(section):
        if message.startswith(f.name) or f" {f.name} " in f" {message} ":
            return f"{section}.{f.name}"
    return section


def from_dict(data: dict) -> ExperimentConfig:
    """Build and validate a config from flat dotted keys."""
    top = {f.name for f in fields(ExperimentConfig) if f.name not in SECTIONS}
    grouped = {name: {} for name in SECTIONS}
    kwargs = {}
    for key, value in data.items():
        head, dot, rest = key.partition(".")
        if dot and head in SECTIONS and rest in {f.name for f in _section_fields(head)}:
            grouped[head][rest] = value
        elif not dot and key in top:
            kwargs[key] = value
        else:
            raise ConfigError(key, "unknown key")
    hints = _hints(ExperimentConfig)
    for key in ("algorithm", "variant"):
        if key in kwargs:
            kwargs[key] = _coerce(key, str, kwargs[key])
    if "output_dir" in kwargs:
        kwargs["output_dir"] = _coerce("output_dir", hints["output_dir"], kwargs["output_dir"])
    if "seeds" in kwargs:
        raw = kwargs["seeds"]
        items = raw if isinstance(raw, list) else [raw]
        kwargs["seeds"] = tuple(_coerce("seeds", int, s) for s in items)
    for name in SECTIONS:
        kwargs[name] = _build_section(name, grouped[name])
    cfg = ExperimentConfig(**kwargs)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError("algorithm", f"must be one of {ALGORITHMS}")
    if cfg.variant not in VARIANTS:
        raise ConfigError("variant", f"must be one of {VARIANTS}")
    if not cfg.seeds:
        raise ConfigError("seeds", "needs at least one seed")
    if any(s < 0 for s in cfg.seeds):
        raise ConfigError("seeds", "seeds must be nonnegative")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("seeds", "seeds must be distinct")
    env = cfg.env
    if env.kind not in ENV_KINDS:
        raise ConfigError("env.kind", f"must be one of {ENV_KINDS}")
    if not 0 <= env.expert_epsilon <= 1:
        raise ConfigError("env.expert_epsilon", "must lie in [0, 1]")
    for name in ("rows", "cols", "num_states", "horizon", "slip", "num_hazards", "small_reward"):
        if getattr(env, name) is not None and name not in ENV_KEYS[env.kind]:
            raise ConfigError(f"env.{name}", f"not a parameter of {env.kind}")
    for name in ("rows", "cols", "num_states", "horizon"):
        v = getattr(env, name)
        if v is not None and v < 1:
            raise ConfigError(f"env.{name}", "must be positive")
    demo = cfg.demo
    if demo.n < 1:
        raise ConfigError("demo.n", "must be at least 1")
    if not 0 < demo.truncation_fraction <= 1:
        raise ConfigError("demo.truncation_fraction", "must lie in (0, 1]")
    for p in demo.tremble_prob:
        if not 0 <= p < 1:
            raise ConfigError("demo.tremble_prob", "levels must lie in [0, 1)")
    if len(set(demo.tremble_prob)) != len(demo.tremble_prob):
        raise ConfigError("demo.tremble_prob", "levels must be distinct")
    npg = cfg.npg
    for name in ("K", "m", "N"):
        if getattr(npg, name) < 1:
            raise ConfigError(f"npg.{name}", "must be positive")
    if npg.eta is not None and npg.eta <= 0:
        raise ConfigError("npg.eta", "must be positive")
    if npg.eta_theta is not None and npg.eta_theta < 0:
        raise ConfigError("npg.eta_theta", "must be nonnegative")
    for name in ("lam", "curiosity_smoothing"):
        if getattr(npg, name) < 0:
            raise ConfigError(f"npg.{name}", "must be nonnegative")
    for name in ("ratio_clip", "reward_radius"):
        if getattr(npg, name) <= 0:
            raise ConfigError(f"npg.{name}", "must be positive")
    if cfg.practical.curiosity not in CURIOSITY_BACKENDS:
        raise ConfigError("practical.curiosity", f"must be one of {CURIOSITY_BACKENDS}")


def to_dict(cfg: ExperimentConfig, include_output=True) -> dict:
    """Flat dotted-key form; ``from_dict(to_dict(c)) == c``."""
    out = {"algorithm": cfg.algorithm, "variant": cfg.variant, "seeds": list(cfg.seeds)}
    if include_output:
        out["output_dir"] = cfg.output_dir
    for name in SECTIONS:
        section = getattr(cfg, name)
        for f in _section_fields(name):
            value = getattr(section, f.name)
            out[f"{name}.{f.name}"] = list(value) if isinstance(value, tuple) else value
    return out


def dumps(cfg: ExperimentConfig) -> str:
    return kvformat.dumps(to_dict(cfg))


def loads(text: str) -> ExperimentConfig:
    return from_dict(kvformat.loads(text))


def parse_config(path) -> ExperimentConfig:
    """Read and validate a config file; parse errors carry the line number."""
    return from_dict(kvformat.load(path))


def emit_config(cfg: ExperimentConfig, path) -> None:
    kvformat.dump(to_dict(cfg), path)


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical text form, ignoring where results are written."""
    return hashlib.sha256(kvformat.dumps(to_dict(cfg, include_output=False)).encode()).hexdigest()


__all__ = [
    "ALGORITHMS", "ConfigError", "DemoSpec", "EnvSpec", "ExperimentConfig", "NpgSpec", "config_hash",
    "dumps", "emit_config", "from_dict", "loads", "parse_config", "to_dict", "validate",
]
