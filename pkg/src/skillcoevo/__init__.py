"""Skill discovery and co-evolution for deterministic text-state games."""

from pathlib import Path

from .bank import Bank, EffectContract, Skill, load_bank, save_bank
from .envs import EnvConfig, create_env
from .trajectory import Trajectory, load_trajectories, save_trajectories

__version__ = "0.1.0"

FIXTURES = Path(__file__).resolve().parent / "fixtures"


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture, e.g. ``fixture_path("diplomacy_bank.json")``."""
    path = FIXTURES / name
    if not path.exists():
        raise FileNotFoundError(f"no bundled fixture {name!r}")
    return path


__all__ = [
    "Bank", "EffectContract", "EnvConfig", "FIXTURES", "Skill", "Trajectory", "__version__",
    "create_env", "fixture_path", "load_bank", "load_trajectories", "save_bank",
    "save_trajectories",
]
