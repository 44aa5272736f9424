"""Candidate skill-boundary proposal from local trajectory signals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..envs import ConfigError
from ..trajectory import Trajectory

FLIP_PERCENTILE = 95.0
SPIKE_SIGMAS = 2.0


@dataclass(frozen=True)
class BoundaryWeights:
    w_pred: float = 0.4
    w_int: float = 0.3
    w_reward: float = 0.2
    w_surprisal: float = 0.0
    w_mode: float = 0.1
    threshold: float = 0.5
    merge_window: int = 2

    def __post_init__(self) -> None:
        ws = (self.w_pred, self.w_int, self.w_reward, self.w_surprisal, self.w_mode)
        if any(w < 0 for w in ws):
            raise ConfigError("boundary weights must be non-negative")
        if not any(ws):
            raise ConfigError("boundary weights are all zero")
        if abs(sum(ws) - 1.0) > 1e-9:
            raise ConfigError(f"boundary weights must sum to 1, got {sum(ws)!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("boundary threshold must lie in [0, 1]")
        if self.merge_window < 0:
            raise ConfigError("merge_window must be >= 0")


@dataclass(frozen=True)
class CandidateBoundary:
    t: int
    score: float
    signals: dict[str, float] = field(default_factory=dict)


def flip_counts(traj: Trajectory) -> list[int]:
    """Predicate flips between the state at t-1 and the state at t (0 at t=0)."""
    exps = traj.experiences
    counts = [0]
    for t in range(1, len(exps)):
        counts.append(len(exps[t].o.predicates ^ exps[t - 1].o.predicates))
    return counts


def flip_scale(trajs: Iterable[Trajectory]) -> float:
    """95th percentile of per-step flip counts across a batch."""
    values = [c for traj in trajs for c in flip_counts(traj)[1:]]
    if not values:
        return 0.0
    return float(np.percentile(values, FLIP_PERCENTILE))


def reward_spikes(rewards: Sequence[float]) -> list[float]:
    r = np.asarray(rewards, dtype=float)
    if len(r) == 0:
        return []
    dev = np.abs(r - r.mean())
    return [1.0 if d > SPIKE_SIGMAS * r.std() else 0.0 for d in dev]


def boundary_scores(traj: Trajectory, weights: BoundaryWeights, f_max: float | None = None,
                    surprisal: Sequence[float] | None = None) -> list[CandidateBoundary]:
    """Score every step t in 1..T-1, before thresholding and merging."""
    exps = traj.experiences
    flips = flip_counts(traj)
    if f_max is None:
        f_max = flip_scale([traj])
    spikes = reward_spikes([e.r for e in exps])
    out = []
    for t in range(1, len(exps)):
        pred = min(1.0, flips[t] / f_max) if f_max > 0 else 0.0
        sig = {
            "pred": weights.w_pred * pred,
            "int": weights.w_int * float(exps[t].z != exps[t - 1].z),
            "reward": weights.w_reward * spikes[t],
            "surprisal": weights.w_surprisal * (float(surprisal[t]) if surprisal is not None else 0.0),
            "mode": weights.w_mode * float(exps[t].mode != exps[t - 1].mode),
        }
        out.append(CandidateBoundary(t, sum(sig.values()), sig))
    return out


def propose_boundaries(traj: Trajectory, weights: BoundaryWeights = BoundaryWeights(),
                       f_max: float | None = None,
                       surprisal: Sequence[float] | None = None) -> list[CandidateBoundary]:
    """Keep steps scoring at least the threshold, one per merge window (highest wins)."""
    if len(traj.experiences) < 2:
        raise ValueError("boundary proposal needs a trajectory of length >= 2")
    scored = [c for c in boundary_scores(traj, weights, f_max, surprisal)
              if c.score >= weights.threshold]
    kept: list[CandidateBoundary] = []
    for cand in sorted(scored, key=lambda c: (-c.score, c.t)):
        if all(abs(cand.t - k.t) > weights.merge_window for k in kept):
            kept.append(cand)
    return sorted(kept, key=lambda c: c.t)
