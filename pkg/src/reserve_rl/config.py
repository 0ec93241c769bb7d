"""Run configuration: INI files, canonical dumps, fingerprints, manifests.

A run is fully described by one INI file with five sections (``run``,
``env``, ``regimes``, ``ppo``, ``eval``, ``baselines``); every key has a
default, unknown sections or keys are rejected rather than ignored, and
the canonical re-serialization of the parsed config is hashed into a
fingerprint that artifacts carry in their sidecars.  Manifests record
what a command read and wrote (with content digests) so outputs can be
traced back to exact inputs; their timestamps are informational and not
part of any comparison.
"""

from __future__ import annotations

import configparser
import datetime
import hashlib
import json
from dataclasses import dataclass, field, fields
from importlib import metadata
from typing import Mapping, Sequence

from .env import DEFAULT_FLOOR, STRICT_FLOOR, EnvConfig, RewardWeights
from .errors import ConfigError, IoFailure
from .agent import PPOConfig
from .regimes import CurriculumSchedule, ShockMode, Stochastic

try:
    VERSION = metadata.version("reserve-rl")
except metadata.PackageNotFoundError:  # running from a source tree
    VERSION = "0.1.0"

FLOOR_FORMS: Mapping[str, tuple[float, float]] = {
    "default": DEFAULT_FLOOR,
    "strict": STRICT_FLOOR,
}


@dataclass(frozen=True)
class RunSection:
    lob: str = "synthetic"
    seed: int = 0
    seeds: tuple[int, ...] = (1, 2, 3)
    a_train: int = 8
    a_test: int = 2


@dataclass(frozen=True)
class EnvSection:
    horizon: int | None = None
    vol_window: int = 4
    vol_scale: float = 0.5
    noise_gain: float = 1.0
    floor: str = "default"
    buffer_capacity: int = 1024
    warmup_min: int = 20
    alpha: float | None = None          # None -> volatility-adaptive
    w_shortfall: float = 5.0
    w_cvar: float = 8.0
    w_inefficiency: float = 1.0
    w_floor: float = 10.0


@dataclass(frozen=True)
class RegimeSection:
    levels: tuple[int, ...] = (0, 1, 2, 3)
    episodes_per_level: int = 200
    ramp_episodes: int = 50


@dataclass(frozen=True)
class PPOSection:
    learning_rate: float = 3e-4
    batch_size: int = 2048
    minibatch_size: int = 256
    epochs: int = 10
    discount: float = 0.99
    clip_range: float = 0.2
    entropy_coef: float = 0.01
    gae_lambda: float = 0.95
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    reward_norm: bool = True
    hidden: tuple[int, ...] = (64, 64)


@dataclass(frozen=True)
class EvalSection:
    episodes: int = 100
    regimes: tuple[int, ...] = (0, 1, 2, 3)
    shocks: tuple[float, ...] = (0.8, 1.0, 1.5, 2.0)
    crn_base: int = 0
    sweep_alphas: tuple[float, ...] = (0.90, 0.95, 0.99)
    sweep_episodes_per_level: int = 25


@dataclass(frozen=True)
class BaselineSection:
    bootstrap_sims: int = 1000
    bootstrap_seed: int = 7
    elr: float | None = None            # None -> pooled implied ratio


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    env: EnvSection = field(default_factory=EnvSection)
    regimes: RegimeSection = field(default_factory=RegimeSection)
    ppo: PPOSection = field(default_factory=PPOSection)
    eval: EvalSection = field(default_factory=EvalSection)
    baselines: BaselineSection = field(default_factory=BaselineSection)


_SECTIONS = ("run", "env", "regimes", "ppo", "eval", "baselines")
_SECTION_TYPES = {
    "run": RunSection,
    "env": EnvSection,
    "regimes": RegimeSection,
    "ppo": PPOSection,
    "eval": EvalSection,
    "baselines": BaselineSection,
}


def default_config() -> RunConfig:
    return RunConfig()


def _parse_scalar(name: str, raw: str, default: object) -> object:
    """Coerce ``raw`` to the type of ``default`` (driven by field name)."""
    raw = raw.strip()
    try:
        if name == "alpha":
            if raw == "adaptive":
                return None
            value = float(raw)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"alpha must lie in (0, 1), got {value!r}")
            return value
        if name == "horizon":
            return None if raw in ("", "auto") else int(raw)
        if name == "elr":
            return None if raw == "pooled" else float(raw)
        if name == "floor":
            if raw not in FLOOR_FORMS:
                raise ConfigError(
                    f"floor must be one of {sorted(FLOOR_FORMS)}, got {raw!r}"
                )
            return raw
        if isinstance(default, bool):
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            if raw == "":
                return ()
            element = default[0] if default else 0
            conv = int if isinstance(element, int) else float
            return tuple(conv(part.strip()) for part in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"could not parse {name} = {raw!r}") from exc


def load_config(path: str | None) -> RunConfig:
    """Read an INI file over the defaults; ``None`` gives pure defaults.

    Raises:
        ConfigError: Unknown section or key, unreadable file, or an
            unparsable value.
    """
    if path is None:
        return default_config()
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path!r}: {exc}") from exc

    sections = {}
    for section_name in parser.sections():
        if section_name not in _SECTION_TYPES:
            raise ConfigError(f"unknown config section [{section_name}]")
        cls = _SECTION_TYPES[section_name]
        known = {f.name: f for f in fields(cls)}
        defaults = cls()
        values = {}
        for key, raw in parser.items(section_name):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in section [{section_name}]")
            values[key] = _parse_scalar(key, raw, getattr(defaults, key))
        sections[section_name] = cls(**values)
    return RunConfig(**sections)


def _format_value(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def config_to_ini(cfg: RunConfig) -> str:
    """Canonical INI rendering: fixed section and key order, repr floats."""
    lines = []
    for section_name in _SECTIONS:
        section = getattr(cfg, section_name)
        lines.append(f"[{section_name}]")
        for f in fields(section):
            value = getattr(section, f.name)
            if value is None:
                rendered = "adaptive" if f.name == "alpha" else (
                    "pooled" if f.name == "elr" else "auto"
                )
            else:
                rendered = _format_value(value)
            lines.append(f"{f.name} = {rendered}")
        lines.append("")
    return "\n".join(lines)


def config_fingerprint(cfg: RunConfig) -> str:
    return hashlib.sha256(config_to_ini(cfg).encode()).hexdigest()


_UNSET = object()


def to_env_config(
    cfg: RunConfig,
    shock_mode: ShockMode | None = None,
    alpha: object = _UNSET,
    floor: tuple[float, float] | None = None,
    horizon: int | None = None,
) -> EnvConfig:
    """Materialize the environment config, with optional sweep overrides
    (``alpha=None`` explicitly selects the volatility-adaptive level)."""
    env = cfg.env
    floor_base, floor_slope = floor if floor is not None else FLOOR_FORMS[env.floor]
    return EnvConfig(
        horizon=horizon if horizon is not None else env.horizon,
        weights=RewardWeights(
            shortfall=env.w_shortfall,
            cvar=env.w_cvar,
            inefficiency=env.w_inefficiency,
            floor=env.w_floor,
        ),
        vol_window=env.vol_window,
        vol_scale=env.vol_scale,
        noise_gain=env.noise_gain,
        floor_base=floor_base,
        floor_slope=floor_slope,
        buffer_capacity=env.buffer_capacity,
        warmup_min=env.warmup_min,
        alpha_override=env.alpha if alpha is _UNSET else alpha,
        shock_mode=shock_mode if shock_mode is not None else Stochastic(0),
        seed=cfg.run.seed,
    )


def to_ppo_config(cfg: RunConfig) -> PPOConfig:
    ppo = cfg.ppo
    return PPOConfig(
        learning_rate=ppo.learning_rate,
        batch_size=ppo.batch_size,
        minibatch_size=ppo.minibatch_size,
        epochs_per_update=ppo.epochs,
        discount=ppo.discount,
        clip_range=ppo.clip_range,
        entropy_coef=ppo.entropy_coef,
        gae_lambda=ppo.gae_lambda,
        value_coef=ppo.value_coef,
        max_grad_norm=ppo.max_grad_norm,
        reward_norm=ppo.reward_norm,
        hidden_sizes=ppo.hidden,
        seeds=cfg.run.seeds,
    )


def to_schedule(cfg: RunConfig, levels: Sequence[int] | None = None) -> CurriculumSchedule:
    return CurriculumSchedule(
        levels=tuple(levels) if levels is not None else cfg.regimes.levels,
        episodes_per_level=cfg.regimes.episodes_per_level,
        ramp_episodes=cfg.regimes.ramp_episodes,
    )


# --- manifests -----------------------------------------------------------------

def git_blob_sha1(path: str) -> str:
    """Content digest matching ``git hash-object`` on the file."""
    try:
        with open(path, "rb") as handle:
            data = handle.read()
    except OSError as exc:
        raise IoFailure(f"cannot hash {path!r}: {exc}") from exc
    header = f"blob {len(data)}\0".encode()
    return hashlib.sha1(header + data).hexdigest()


def build_manifest(
    command: str,
    cfg: RunConfig,
    inputs: Mapping[str, str],
    outputs: Sequence[str],
) -> dict:
    """Describe one command invocation: config identity, inputs, outputs.

    The ``created_at`` timestamp is informational only; comparisons
    between manifests must ignore it.
    """
    return {
        "tool": "reserve-rl",
        "version": VERSION,
        "command": command,
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config_fingerprint": config_fingerprint(cfg),
        "inputs": {name: git_blob_sha1(p) for name, p in sorted(inputs.items())},
        "outputs": sorted(outputs),
    }


def write_manifest(path: str, manifest: Mapping[str, object]) -> None:
    try:
        with open(path, "w") as handle:
            json.dump(manifest, handle, sort_keys=True, separators=(",", ":"))
            handle.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write manifest {path!r}: {exc}") from exc
