"""Run configuration: an INI file with one section per component.

Only the oracle settings honor environment overrides (ORACLE_ENDPOINT,
ORACLE_MODEL, ORACLE_API_KEY). Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .agent import PolicyConfig
from .discovery.boundaries import BoundaryWeights
from .discovery.params import MaintenanceParams
from .envs import ConfigError, EnvConfig
from .oracle import OracleSettings
from .rewards import RewardParams

# (total_steps, episodes_per_step, ckpt_interval) per game
SCHEDULES = {"g2048": (10, 8, 3), "candycrush": (10, 8, 3), "tetris": (7, 8, 1)}


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class CoEvolutionConfig:
    game: EnvConfig
    total_steps: int
    episodes_per_step: int
    ckpt_interval: int
    output_dir: str = "runs/default"
    workers: int = field(default_factory=default_workers)
    seed_bank: str | None = None
    boundaries: BoundaryWeights = field(default_factory=BoundaryWeights)
    maintenance: MaintenanceParams = field(default_factory=MaintenanceParams)
    rewards: RewardParams = field(default_factory=RewardParams)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    oracle: OracleSettings = field(default_factory=OracleSettings)

    def __post_init__(self) -> None:
        if self.total_steps < 1 or self.episodes_per_step < 1 or self.ckpt_interval < 1:
            raise ConfigError("total_steps, episodes_per_step and ckpt_interval must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.policy.oracle != self.oracle:
            # the policy always talks to the run's oracle
            object.__setattr__(self, "policy", dataclasses.replace(self.policy, oracle=self.oracle))

    @classmethod
    def for_game(cls, game_id: str, seed: int = 0, **overrides) -> "CoEvolutionConfig":
        """Defaults with the game's standard schedule."""
        if game_id not in SCHEDULES:
            raise ConfigError(f"unknown game_id {game_id!r}")
        steps, episodes, ckpt = SCHEDULES[game_id]
        values: dict[str, Any] = {"game": EnvConfig(game_id, seed), "total_steps": steps,
                                  "episodes_per_step": episodes, "ckpt_interval": ckpt}
        values.update(overrides)
        return cls(**values)


# section name -> (config attribute, dataclass type)
_COMPONENTS = {
    "boundaries": BoundaryWeights,
    "maintenance": MaintenanceParams,
    "rewards": RewardParams,
    "policy": PolicyConfig,
    "oracle": OracleSettings,
}
_RUN_KEYS = {"total_steps": int, "episodes_per_step": int, "ckpt_interval": int,
             "output_dir": str, "workers": int, "seed_bank": str}
_GAME_KEYS = {"id": str, "seed": int, "max_steps": int, "gamma": float}
# never read from files; environment only
_SECRET_KEYS = {"api_key"}


def _convert(raw: str, typ, where: str):
    try:
        if typ is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ.__name__}") from None


def _field_types(cls) -> dict[str, type]:
    types = {}
    for f in dataclasses.fields(cls):
        t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
        base = t.split("|")[0].strip()
        types[f.name] = {"int": int, "float": float, "bool": bool, "str": str}.get(base)
    return types


def _section(parser: configparser.ConfigParser, name: str, cls) -> Any:
    if not parser.has_section(name):
        return cls()
    types = _field_types(cls)
    values = {}
    for key, raw in parser.items(name):
        if key in _SECRET_KEYS:
            raise ConfigError(f"[{name}] {key} must come from the environment, not the file")
        if key not in types or types[key] is None:
            raise ConfigError(f"unknown key [{name}] {key}")
        if raw.strip() == "":
            continue
        values[key] = _convert(raw, types[key], f"[{name}] {key}")
    return cls(**values)


def parse_config(text: str, base_dir: str | Path = ".", environ=None) -> CoEvolutionConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"malformed config: {err}") from None
    unknown = set(parser.sections()) - set(_COMPONENTS) - {"game", "run"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    if not parser.has_option("game", "id"):
        raise ConfigError("[game] id is required")
    game_vals: dict[str, Any] = {}
    for key, raw in parser.items("game"):
        if key not in _GAME_KEYS:
            raise ConfigError(f"unknown key [game] {key}")
        game_vals[key] = _convert(raw, _GAME_KEYS[key], f"[game] {key}")
    game_id = game_vals.pop("id")
    game = EnvConfig(game_id, **game_vals)
    steps, episodes, ckpt = SCHEDULES.get(game_id, (1, 1, 1))
    run: dict[str, Any] = {"total_steps": steps, "episodes_per_step": episodes,
                           "ckpt_interval": ckpt}
    if parser.has_section("run"):
        for key, raw in parser.items("run"):
            if key not in _RUN_KEYS:
                raise ConfigError(f"unknown key [run] {key}")
            if raw.strip() == "":
                continue
            run[key] = _convert(raw, _RUN_KEYS[key], f"[run] {key}")
    for key in ("output_dir", "seed_bank"):
        if run.get(key):
            p = Path(run[key])
            run[key] = str(p if p.is_absolute() else Path(base_dir) / p)
    comps = {name: _section(parser, name, cls) for name, cls in _COMPONENTS.items()}
    env = os.environ if environ is None else environ
    oracle = comps["oracle"]
    comps["oracle"] = dataclasses.replace(
        oracle,
        endpoint=env.get("ORACLE_ENDPOINT") or oracle.endpoint,
        model=env.get("ORACLE_MODEL") or oracle.model,
        api_key=env.get("ORACLE_API_KEY") or None,
    )
    comps["policy"] = dataclasses.replace(comps["policy"], oracle=comps["oracle"])
    return CoEvolutionConfig(game=game, **run, **comps)


def load_config(path: str | Path, environ=None) -> CoEvolutionConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return parse_config(text, path.parent, environ)


def config_to_ini(config: CoEvolutionConfig) -> str:
    """Serialize without secrets, in a stable order."""
    parser = configparser.ConfigParser(interpolation=None)
    g = config.game
    parser["game"] = {"id": g.game_id, "seed": str(g.seed), "max_steps": str(g.max_steps),
                      "gamma": repr(g.gamma)}
    parser["run"] = {"total_steps": str(config.total_steps),
                     "episodes_per_step": str(config.episodes_per_step),
                     "ckpt_interval": str(config.ckpt_interval),
                     "workers": str(config.workers), "seed_bank": config.seed_bank or ""}
    for name in _COMPONENTS:
        obj = getattr(config, name)
        values = {}
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if f.name in _SECRET_KEYS or f.name == "oracle" or f.name == "audit_path":
                continue
            values[f.name] = "" if v is None else (repr(v) if isinstance(v, float) else str(v))
        parser[name] = values
    buf = []
    for section in parser.sections():
        buf.append(f"[{section}]")
        buf.extend(f"{k} = {v}" for k, v in parser[section].items())
        buf.append("")
    return "\n".join(buf)


__all__ = ["CoEvolutionConfig", "SCHEDULES", "config_to_ini", "default_workers", "load_config",
           "parse_config"]
