"""Experience/trajectory data model, JSONL persistence and rollout collection.

File layout: each trajectory is one header line followed by one line per
experience. Keys are sorted so files diff cleanly.

    {"record": "header", "schema_version": 1, "episode_id": ..., "game_id": ...,
     "seed": ..., "iteration": ..., "length": ...}
    {"record": "experience", "t": 0, "o": {...}, "a": {...}, "r": ..., "o_next": {...},
     "d": false, "z": "...", "active_skill": null, "mode": "primitive_action", "info": {...}}
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable

from .envs import Action, Observation, action_from_dict, extract_predicates

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MODES = ("primitive_action", "skill_selection")
MAX_TAG_WORDS = 12


class TrajectoryError(ValueError):
    """Invalid trajectory construction (chain violation, empty buffer, misuse)."""


class TrajectoryParseError(ValueError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


def normalize_tag(tag: str) -> str:
    """Lowercase, collapse whitespace, cap at 12 words."""
    words = tag.strip().lower().split()
    return " ".join(words[:MAX_TAG_WORDS])


@dataclass(frozen=True)
class State:
    """Observation digest stored inside experiences."""

    step_index: int
    predicates: frozenset[str]
    summary: str
    payload: dict[str, Any]
    score: float

    @classmethod
    def from_observation(cls, obs: Observation) -> "State":
        return cls(obs.step_index, extract_predicates(obs), obs.text_summary, obs.payload,
                   obs.score_so_far)

    def __eq__(self, other) -> bool:
        if not isinstance(other, State):
            return NotImplemented
        return (self.step_index == other.step_index and self.predicates == other.predicates
                and self.summary == other.summary and self.payload == other.payload
                and self.score == other.score)

    def __hash__(self) -> int:
        return hash((self.step_index, self.predicates, self.summary))

    def to_dict(self) -> dict[str, Any]:
        return {"step_index": self.step_index, "predicates": sorted(self.predicates),
                "summary": self.summary, "payload": self.payload, "score": self.score}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "State":
        return cls(int(d["step_index"]), frozenset(d["predicates"]), d["summary"], d["payload"],
                   float(d["score"]))


@dataclass(frozen=True)
class Experience:
    o: State
    a: Action
    r: float
    o_next: State
    d: bool
    z: str
    active_skill: str | None = None
    mode: str = "primitive_action"
    info: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise TrajectoryError(f"unknown experience mode {self.mode!r}")
        z = normalize_tag(self.z)
        if not z:
            raise TrajectoryError("intention tag must be non-empty")
        object.__setattr__(self, "z", z)

    def to_dict(self) -> dict[str, Any]:
        return {"o": self.o.to_dict(), "a": self.a.to_dict(), "r": self.r,
                "o_next": self.o_next.to_dict(), "d": self.d, "z": self.z,
                "active_skill": self.active_skill, "mode": self.mode, "info": self.info}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Experience":
        return cls(State.from_dict(d["o"]), action_from_dict(d["a"]), float(d["r"]),
                   State.from_dict(d["o_next"]), bool(d["d"]), d["z"], d["active_skill"],
                   d["mode"], d.get("info", {}))


@dataclass
class Trajectory:
    episode_id: str
    game_id: str
    seed: int
    experiences: list[Experience]
    total_reward: float
    iteration: int = 0
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.experiences)

    @property
    def primitive_length(self) -> int:
        return sum(1 for e in self.experiences if e.mode == "primitive_action")

    def state_at(self, t: int) -> State:
        """State at step boundary t (0..T); t = T is the final o_next."""
        if not 0 <= t <= len(self.experiences):
            raise IndexError(f"step {t} outside [0, {len(self.experiences)}]")
        if t == len(self.experiences):
            return self.experiences[-1].o_next
        return self.experiences[t].o


@dataclass
class EpisodeBuffer:
    episode_id: str
    game_id: str
    seed: int
    iteration: int = 0
    max_steps: int | None = None
    experiences: list[Experience] = field(default_factory=list)
    running_reward: float = 0.0
    finalized: bool = False

    def append(self, e: Experience) -> "EpisodeBuffer":
        if self.finalized:
            raise TrajectoryError("cannot append to a finalized episode buffer")
        if self.experiences and self.experiences[-1].d:
            raise TrajectoryError("cannot append after a terminal experience")
        self.experiences.append(e)
        self.running_reward += e.r
        return self

    def finalize(self) -> Trajectory:
        if not self.experiences:
            raise TrajectoryError("cannot finalize an empty episode buffer")
        exps = self.experiences
        n_prim = sum(1 for e in exps if e.mode == "primitive_action")
        if not exps[-1].d and (self.max_steps is None or n_prim != self.max_steps):
            raise TrajectoryError("last experience must be terminal or reach max_steps")
        check_chain(exps)
        self.finalized = True
        total = 0.0
        for e in exps:
            total += e.r
        return Trajectory(self.episode_id, self.game_id, self.seed, list(exps), total,
                          self.iteration)


def append_experience(buffer: EpisodeBuffer, e: Experience) -> EpisodeBuffer:
    return buffer.append(e)


def finalize(buffer: EpisodeBuffer) -> Trajectory:
    return buffer.finalize()


def check_chain(exps: list[Experience]) -> None:
    for t in range(len(exps) - 1):
        if exps[t].o_next != exps[t + 1].o:
            raise TrajectoryError(f"chain violation: o_next of step {t} != o of step {t + 1}")
    for t, e in enumerate(exps[:-1]):
        if e.d:
            raise TrajectoryError(f"non-final experience {t} is marked terminal")


# --- persistence -----------------------------------------------------------

def _dumps(obj: dict[str, Any]) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def save_trajectories(path: str | Path, trajectories: Iterable[Trajectory]) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for traj in trajectories:
            header = {"record": "header", "schema_version": SCHEMA_VERSION,
                      "episode_id": traj.episode_id, "game_id": traj.game_id, "seed": traj.seed,
                      "iteration": traj.iteration, "length": len(traj.experiences)}
            fh.write(_dumps(header) + "\n")
            for t, e in enumerate(traj.experiences):
                fh.write(_dumps({"record": "experience", "t": t, **e.to_dict()}) + "\n")
    tmp.replace(path)


def load_trajectories(path: str | Path, lenient: bool = False) -> list[Trajectory]:
    """Read a trajectory JSONL file.

    In lenient mode a malformed line stops reading; trajectories completed
    before it are returned, plus the interrupted one (``truncated=True``)
    holding whatever experiences were recovered.
    """
    path = Path(path)
    out: list[Trajectory] = []
    header: dict[str, Any] | None = None
    exps: list[Experience] = []

    def close(line_no: int) -> None:
        if header is None:
            return
        if len(exps) != header["length"]:
            raise TrajectoryParseError(path, line_no, f"episode {header['episode_id']} has "
                                       f"{len(exps)} experiences, header says {header['length']}")
        try:
            check_chain(exps)
        except TrajectoryError as err:
            raise TrajectoryParseError(path, line_no, str(err)) from None
        total = 0.0
        for e in exps:
            total += e.r
        out.append(Trajectory(header["episode_id"], header["game_id"], int(header["seed"]),
                              list(exps), total, int(header["iteration"])))

    with path.open(encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    line_no = 0
    try:
        for line_no, line in enumerate(lines, start=1):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise TrajectoryParseError(path, line_no, f"malformed JSON ({err.msg})") from None
            kind = rec.get("record")
            if kind == "header":
                if rec.get("schema_version") != SCHEMA_VERSION:
                    raise TrajectoryParseError(
                        path, line_no, f"unsupported schema_version {rec.get('schema_version')!r}")
                close(line_no)
                header, exps = rec, []
            elif kind == "experience":
                if header is None:
                    raise TrajectoryParseError(path, line_no, "experience before any header")
                try:
                    exps.append(Experience.from_dict(rec))
                except (KeyError, TypeError, ValueError) as err:
                    raise TrajectoryParseError(path, line_no, f"bad experience: {err}") from None
            else:
                raise TrajectoryParseError(path, line_no, f"unknown record type {kind!r}")
        close(line_no + 1)
    except TrajectoryParseError as err:
        if not lenient:
            raise
        log.warning("stopping at %s", err)
        if header is not None and (not out or out[-1].episode_id != header["episode_id"]):
            total = sum(e.r for e in exps)
            out.append(Trajectory(header["episode_id"], header["game_id"], int(header["seed"]),
                                  list(exps), total, int(header["iteration"]), truncated=True))
    return out


# --- rollout collection -----------------------------------------------------

def _rollout_one(args) -> Trajectory:
    from .agent import run_episode

    env_config, bank, policy_config, reward_params, iteration = args
    return run_episode(env_config, bank, policy_config, reward_params, iteration=iteration)


def collect_rollouts(env_config, bank, policy_config, n_episodes: int, base_seed: int,
                     reward_params=None, iteration: int = 0, workers: int = 1) -> list[Trajectory]:
    """Play ``n_episodes`` with seeds ``base_seed .. base_seed + n - 1``.

    The bank is only read. With ``workers > 1`` episodes run in a process
    pool; results come back in seed order either way.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    jobs = [(replace(env_config, seed=base_seed + i), bank, policy_config, reward_params, iteration)
            for i in range(n_episodes)]
    if workers > 1 and n_episodes > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(workers, n_episodes)) as pool:
            return list(pool.map(_rollout_one, jobs))
    return [_rollout_one(job) for job in jobs]
