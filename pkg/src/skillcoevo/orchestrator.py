"""Co-evolution loop: collect rollouts, discover skills, update the bank, repeat.

Run directory layout::

    config.ini                  resolved configuration (no secrets)
    iter_001/trajectories.jsonl
    iter_001/segments.jsonl
    iter_001/mutations.json
    iter_001/report.json        rewards, reuse row, evolution point
    banks/bank_u003.json        snapshots every ckpt_interval and at the end
    evolution.csv               one row per iteration, written at the end
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .agent import PolicyConfig, run_episode
from .bank import Bank, BankMutation, load_bank, save_bank
from .config import CoEvolutionConfig, config_to_ini
from .discovery.boundaries import BoundaryWeights, flip_scale, propose_boundaries
from .discovery.maintenance import maintain_bank
from .discovery.params import MaintenanceParams
from .discovery.segmentation import LabeledSegment, infer_segmentation, save_segments
from .envs import EnvConfig
from .metrics import (EvolutionPoint, ReusabilityRow, evolution_point, reusability_report,
                      to_csv)
from .oracle import OracleClient
from .rewards import (RewardParams, contract_reward, curator_reward, mean_or_nan,
                      retrieval_reward, segmentation_reward, skill_episode_stats)
from .trajectory import Trajectory, collect_rollouts, save_trajectories

log = logging.getLogger(__name__)

BANK_RE = re.compile(r"bank_u(\d+)\.json$")


class RunError(RuntimeError):
    """The run directory is in a state the requested operation cannot use."""


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False, default=_jsonable) + "\n"


def _jsonable(obj):
    if isinstance(obj, (frozenset, set)):
        return sorted(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _finite(x: float) -> float | None:
    return None if x is None or math.isnan(x) else x


@dataclass
class IterationArtifacts:
    iteration: int
    trajectory_path: str
    segments_path: str
    mutations_path: str
    report_path: str
    bank_snapshot_path: str | None
    mutations: list[BankMutation] = field(default_factory=list)
    mean_reward: float = 0.0
    max_reward: float = 0.0
    reusability: ReusabilityRow | None = None
    evolution: EvolutionPoint | None = None
    rewards: dict[str, float | None] = field(default_factory=dict)

    def report(self) -> dict[str, Any]:
        """JSON form with paths relative to the run directory."""
        return {
            "iteration": self.iteration,
            "trajectory_path": self.trajectory_path,
            "segments_path": self.segments_path,
            "mutations_path": self.mutations_path,
            "bank_snapshot_path": self.bank_snapshot_path,
            "n_mutations": len(self.mutations),
            "n_approved": sum(m.approved for m in self.mutations),
            "mean_reward": self.mean_reward,
            "max_reward": self.max_reward,
            "reusability": asdict(self.reusability) if self.reusability else None,
            "evolution": asdict(self.evolution) if self.evolution else None,
            "rewards": self.rewards,
        }

    @classmethod
    def from_report(cls, d: dict[str, Any], mutations: list[BankMutation]) -> "IterationArtifacts":
        return cls(d["iteration"], d["trajectory_path"], d["segments_path"], d["mutations_path"],
                   f"iter_{d['iteration']:03d}/report.json", d["bank_snapshot_path"], mutations,
                   d["mean_reward"], d["max_reward"],
                   ReusabilityRow(**d["reusability"]) if d["reusability"] else None,
                   EvolutionPoint(**d["evolution"]) if d["evolution"] else None, d["rewards"])


# --- discovery over a batch ---------------------------------------------------

def discover(trajs: Sequence[Trajectory], bank: Bank,
             weights: BoundaryWeights = BoundaryWeights(),
             params: MaintenanceParams = MaintenanceParams(),
             oracle: OracleClient | None = None) -> list[list[LabeledSegment]]:
    """Boundaries and segmentation for each trajectory against one bank snapshot."""
    f_max = flip_scale(trajs)
    out = []
    for traj in trajs:
        cands = propose_boundaries(traj, weights, f_max) if len(traj) >= 2 else []
        out.append(infer_segmentation(traj, cands, bank, params, oracle))
    return out


def update_bank(trajs: Sequence[Trajectory], bank: Bank, weights: BoundaryWeights,
                params: MaintenanceParams, iteration: int | None = None,
                oracle: OracleClient | None = None):
    """One full discovery pass; returns (segments per trajectory, new bank, mutations)."""
    per_traj = discover(trajs, bank, weights, params, oracle)
    flat = [s for segs in per_traj for s in segs]
    new_bank, mutations = maintain_bank(bank, flat, params, iteration, oracle)
    return per_traj, new_bank, mutations


def reward_breakdown(trajs: Sequence[Trajectory], per_traj: Sequence[Sequence[LabeledSegment]],
                     bank: Bank, new_bank: Bank, mutations: Sequence[BankMutation],
                     params: MaintenanceParams, reward_params: RewardParams,
                     horizon: int) -> dict[str, float | None]:
    seg = [segmentation_reward(t, s, bank, params)["total"] for t, s in zip(trajs, per_traj)]
    contract = [contract_reward(s.contract, s.instances, None, reward_params,
                                params.theta_consensus)["total"]
                for s in new_bank.active_skills() if s.instances]
    curator = [curator_reward(m, None, params.n_mat)["total"] for m in mutations]
    retrieval = [retrieval_reward(st, reward_params) for st in skill_episode_stats(trajs, horizon)]
    shaped = [sum(e.info.get("r_t", e.r) for e in t.experiences) for t in trajs]
    return {k: _finite(mean_or_nan(v)) for k, v in {
        "segmentation": seg, "contract": contract, "curator": curator,
        "retrieval": retrieval, "shaped_return": shaped}.items()}


# --- run -------------------------------------------------------------------

def iteration_dir(out: Path, u: int) -> Path:
    return out / f"iter_{u:03d}"


def snapshot_path(out: Path, u: int) -> Path:
    return out / "banks" / f"bank_u{u:03d}.json"


def snapshot_iterations(total_steps: int, ckpt_interval: int) -> list[int]:
    return [u for u in range(1, total_steps + 1) if u % ckpt_interval == 0 or u == total_steps]


def latest_snapshot(out: Path) -> tuple[int, Path] | None:
    """Newest snapshot whose iteration finished (its report.json exists)."""
    found = []
    for p in (out / "banks").glob("bank_u*.json"):
        m = BANK_RE.search(p.name)
        if m and (iteration_dir(out, int(m.group(1))) / "report.json").exists():
            found.append((int(m.group(1)), p))
    return max(found) if found else None


def initial_bank(config: CoEvolutionConfig) -> Bank:
    if not config.seed_bank:
        return Bank()
    bank = load_bank(config.seed_bank)
    if bank.version != 0:
        log.info("rebasing seed bank version %d to 0", bank.version)
        bank.version = 0
    return bank


def _load_done(out: Path, u: int) -> IterationArtifacts:
    d = iteration_dir(out, u)
    report = json.loads((d / "report.json").read_text(encoding="utf-8"))
    muts = [BankMutation.from_dict(m)
            for m in json.loads((d / "mutations.json").read_text(encoding="utf-8"))]
    return IterationArtifacts.from_report(report, muts)


def run_coevolution(config: CoEvolutionConfig, resume: bool = False,
                    oracle: OracleClient | None = None,
                    progress: Callable[[IterationArtifacts], None] | None = None
                    ) -> list[IterationArtifacts]:
    """Alternate rollouts and bank updates for ``config.total_steps`` iterations."""
    out = Path(config.output_dir)
    oracle = oracle or OracleClient.from_settings(config.oracle)
    policy = replace(config.policy, oracle=config.oracle)
    done: list[IterationArtifacts] = []
    start = 1
    if resume:
        snap = latest_snapshot(out)
        if snap is not None:
            u0, path = snap
            bank = load_bank(path)
            if bank.version != u0:
                raise RunError(f"snapshot {path} has version {bank.version}, expected {u0}")
            done = [_load_done(out, u) for u in range(1, u0 + 1)]
            start = u0 + 1
            log.info("resuming after iteration %d from %s", u0, path)
        else:
            bank = initial_bank(config)
    else:
        if any(out.glob("iter_*")) or (out / "banks").exists():
            raise RunError(f"{out} already holds a run; resume it or choose a new directory")
        bank = initial_bank(config)
    out.mkdir(parents=True, exist_ok=True)
    (out / "banks").mkdir(exist_ok=True)
    _write_atomic(out / "config.ini", config_to_ini(config))

    snaps = set(snapshot_iterations(config.total_steps, config.ckpt_interval))
    results = list(done)
    for u in range(start, config.total_steps + 1):
        base_seed = config.game.seed + (u - 1) * config.episodes_per_step
        trajs = collect_rollouts(config.game, bank, policy, config.episodes_per_step, base_seed,
                                 config.rewards, iteration=u, workers=config.workers)
        per_traj, new_bank, mutations = update_bank(trajs, bank, config.boundaries,
                                                    config.maintenance, u, oracle)
        if new_bank.version != u:
            raise RunError(f"bank version {new_bank.version} after iteration {u}")
        art = _persist(out, u, trajs, per_traj, bank, new_bank, mutations, config, u in snaps)
        results.append(art)
        bank = new_bank
        if progress is not None:
            progress(art)
    write_evolution_csv(out, results)
    return results


def _persist(out: Path, u: int, trajs, per_traj, old_bank: Bank, bank: Bank, mutations,
             config: CoEvolutionConfig, snapshot: bool) -> IterationArtifacts:
    d = iteration_dir(out, u)
    d.mkdir(parents=True, exist_ok=True)

    def rel(p: Path) -> str:
        return p.relative_to(out).as_posix()

    traj_path, seg_path = d / "trajectories.jsonl", d / "segments.jsonl"
    mut_path, report_path = d / "mutations.json", d / "report.json"
    save_trajectories(traj_path, trajs)
    flat = [s for segs in per_traj for s in segs]
    save_segments(seg_path, flat)
    _write_atomic(mut_path, _dump([m.to_dict() for m in mutations]))
    snap_rel = None
    if snapshot:
        snap = snapshot_path(out, u)
        save_bank(snap, bank)
        snap_rel = rel(snap)
    try:
        row = reusability_report(bank, flat)
    except ValueError:
        row = None
    rewards = [t.total_reward for t in trajs]
    art = IterationArtifacts(
        u, rel(traj_path), rel(seg_path), rel(mut_path), rel(report_path), snap_rel,
        list(mutations), float(np.mean(rewards)), float(np.max(rewards)), row,
        evolution_point(bank),
        reward_breakdown(trajs, per_traj, old_bank, bank, mutations, config.maintenance,
                         config.rewards, config.game.max_steps))
    # the report goes last: its presence marks the iteration complete
    _write_atomic(report_path, _dump(art.report()))
    return art


def write_evolution_csv(out: Path, results: Sequence[IterationArtifacts]) -> Path:
    path = out / "evolution.csv"
    points = [r.evolution for r in results if r.evolution is not None]
    _write_atomic(path, to_csv(points, EvolutionPoint.HEADER))
    return path


# --- evaluation ----------------------------------------------------------------

@dataclass(frozen=True)
class EvaluationSummary:
    game_id: str
    n: int
    mean: float
    std: float | None
    half_width: float | None
    seeds: tuple[int, ...]
    rewards: tuple[float, ...]

    @property
    def ci(self) -> tuple[float, float] | None:
        if self.half_width is None:
            return None
        return (self.mean - self.half_width, self.mean + self.half_width)

    def format(self) -> str:
        hw = "NA" if self.half_width is None else f"{self.half_width:.2f}"
        return f"{self.game_id}: {self.mean:.2f} ± {hw} (95% CI, n={self.n})"

    def to_dict(self) -> dict[str, Any]:
        return {"game_id": self.game_id, "n": self.n, "mean": self.mean, "std": self.std,
                "half_width": self.half_width,
                "ci": list(self.ci) if self.ci is not None else None,
                "seeds": list(self.seeds), "rewards": list(self.rewards)}


def summarize_rewards(game_id: str, rewards: Sequence[float], seeds: Sequence[int]) -> EvaluationSummary:
    """Mean with a normal-approximation 95% interval (NA for a single rollout)."""
    x = np.asarray(rewards, dtype=float)
    n = len(x)
    if n == 0:
        raise ValueError("no rewards to summarize")
    std = float(x.std(ddof=1)) if n > 1 else None
    half = 1.96 * std / math.sqrt(n) if std is not None else None
    return EvaluationSummary(game_id, n, float(x.mean()), std, half, tuple(seeds),
                             tuple(float(r) for r in x))


def evaluate(bank_path: str | Path | None, env_config: EnvConfig,
             policy: PolicyConfig = PolicyConfig(), n_episodes: int = 16,
             seeds: Sequence[int] | None = None, reward_params: RewardParams | None = None,
             oracle: OracleClient | None = None) -> EvaluationSummary:
    """Play ``n_episodes`` with a read-only bank and report mean and 95% CI."""
    bank = load_bank(bank_path) if bank_path is not None else Bank()
    if seeds is None:
        seeds = [env_config.seed + i for i in range(n_episodes)]
    seeds = list(seeds)
    if len(seeds) != n_episodes:
        raise ValueError(f"got {len(seeds)} seeds for {n_episodes} episodes")
    rewards = []
    for s in seeds:
        traj = run_episode(replace(env_config, seed=s), bank, policy, reward_params,
                           iteration=bank.version, oracle=oracle)
        rewards.append(traj.total_reward)
    return summarize_rewards(env_config.game_id, rewards, seeds)


__all__ = [
    "EvaluationSummary", "IterationArtifacts", "RunError", "discover", "evaluate",
    "initial_bank", "latest_snapshot", "reward_breakdown", "run_coevolution",
    "snapshot_iterations", "summarize_rewards", "update_bank", "write_evolution_csv",
]
