"""Deterministic text-state game environments with a Gym-style surface."""

from __future__ import annotations

from typing import Union

import numpy as np

from . import candycrush, g2048, tetris
from .base import (DIRECTIONS, GAMES, MAX_STEPS, Action, ConfigError, Direction, EnvConfig,
                   EpisodeDoneError, InvalidActionError, Observation, Placement, SelectSkill,
                   StepResult, Swap, TextAction, action_from_dict)
from .candycrush import CandyCrushEnv
from .g2048 import G2048Env
from .tetris import TetrisEnv

Env = Union[G2048Env, CandyCrushEnv, TetrisEnv]

_ENVS = {"g2048": G2048Env, "candycrush": CandyCrushEnv, "tetris": TetrisEnv}


def create_env(config: EnvConfig) -> tuple[Env, Observation]:
    """Build an environment and return it with its initial observation."""
    try:
        cls = _ENVS[config.game_id]
    except KeyError:
        raise ConfigError(f"unknown game_id {config.game_id!r}") from None
    env = cls(config)
    return env, env.observation()


def extract_predicates(obs: Observation) -> frozenset[str]:
    """Ground predicate set for an observation.

    Fixture observations from games without an environment here carry their
    predicates inline under ``payload["predicates"]``.
    """
    if obs.game_id == "g2048":
        return g2048.board_predicates(np.array(obs.payload["board"], dtype=np.int64))
    if obs.game_id == "candycrush":
        return candycrush.board_predicates(obs.payload)
    if obs.game_id == "tetris":
        return tetris.board_predicates(obs.payload)
    if "predicates" in obs.payload:
        return frozenset(obs.payload["predicates"])
    raise ConfigError(f"no predicate extractor for game {obs.game_id!r}")


def render_state_summary(obs: Observation) -> str:
    if obs.game_id == "g2048":
        return g2048.render(obs.payload, obs.payload.get("score", obs.score_so_far))
    if obs.game_id == "candycrush":
        return candycrush.render(obs.payload, obs.payload.get("score", obs.score_so_far))
    if obs.game_id == "tetris":
        return tetris.render(obs.payload, obs.payload.get("score", obs.score_so_far))
    return obs.text_summary


__all__ = [
    "Action", "CandyCrushEnv", "ConfigError", "DIRECTIONS", "Direction", "Env", "EnvConfig",
    "EpisodeDoneError", "G2048Env", "GAMES", "InvalidActionError", "MAX_STEPS", "Observation",
    "Placement", "SelectSkill", "StepResult", "Swap", "TetrisEnv", "TextAction",
    "action_from_dict", "create_env", "extract_predicates", "render_state_summary",
]
