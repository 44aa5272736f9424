"""Shared environment types: configs, observations, actions, step results."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Union

GAMES = ("g2048", "candycrush", "tetris")
MAX_STEPS = {"g2048": 200, "candycrush": 50, "tetris": 200}


class ConfigError(ValueError):
    """Raised for an invalid environment or pipeline configuration."""


class InvalidActionError(ValueError):
    """Raised when an action is not in the current valid set."""


class EpisodeDoneError(RuntimeError):
    """Raised when stepping an environment whose episode already ended."""


@dataclass(frozen=True)
class EnvConfig:
    game_id: str
    seed: int = 0
    max_steps: int | None = None
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.game_id not in GAMES:
            raise ConfigError(f"unknown game_id {self.game_id!r}; expected one of {GAMES}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.max_steps is None:
            object.__setattr__(self, "max_steps", MAX_STEPS[self.game_id])
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")


@dataclass(frozen=True)
class Observation:
    game_id: str
    step_index: int
    text_summary: str
    payload: dict[str, Any]
    score_so_far: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "game_id": self.game_id,
            "step_index": self.step_index,
            "text_summary": self.text_summary,
            "payload": self.payload,
            "score_so_far": self.score_so_far,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Observation":
        return cls(d["game_id"], int(d["step_index"]), d["text_summary"], d["payload"],
                   float(d["score_so_far"]))


# --- actions -------------------------------------------------------------

DIRECTIONS = ("up", "down", "left", "right")


@dataclass(frozen=True)
class Direction:
    direction: str

    def describe(self) -> str:
        return self.direction

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "direction", "direction": self.direction}


@dataclass(frozen=True)
class Swap:
    r1: int
    c1: int
    r2: int
    c2: int

    def describe(self) -> str:
        return f"swap ({self.r1},{self.c1}) ({self.r2},{self.c2})"

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "swap", "cells": [self.r1, self.c1, self.r2, self.c2]}


@dataclass(frozen=True)
class Placement:
    rotation: int
    column: int

    def describe(self) -> str:
        return f"place rot {self.rotation} col {self.column}"

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "placement", "rotation": self.rotation, "column": self.column}


@dataclass(frozen=True)
class SelectSkill:
    """Pseudo-action recorded on skill-selection steps; never sent to an env."""

    skill_id: str

    def describe(self) -> str:
        return f"select skill {self.skill_id}"

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "select_skill", "skill_id": self.skill_id}


@dataclass(frozen=True)
class TextAction:
    """Free-form recorded action (e.g. replayed orders from fixture games)."""

    text: str

    def describe(self) -> str:
        return self.text

    def to_dict(self) -> dict[str, Any]:
        return {"kind": "text", "text": self.text}


Action = Union[Direction, Swap, Placement, SelectSkill, TextAction]


def action_from_dict(d: dict[str, Any]) -> Action:
    kind = d.get("kind")
    if kind == "direction":
        return Direction(d["direction"])
    if kind == "swap":
        return Swap(*(int(v) for v in d["cells"]))
    if kind == "placement":
        return Placement(int(d["rotation"]), int(d["column"]))
    if kind == "select_skill":
        return SelectSkill(d["skill_id"])
    if kind == "text":
        return TextAction(d["text"])
    raise ValueError(f"unknown action kind {kind!r}")


@dataclass
class StepResult:
    next_obs: Observation
    reward: float
    done: bool
    info: dict[str, Any] = field(default_factory=dict)
