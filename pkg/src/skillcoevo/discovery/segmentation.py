"""Segment decoding: choose cuts among candidate boundaries and label each segment.

The decoder maximizes the length-weighted sum of per-segment values,

    sum over segments of (t1 - t0) / T * value(segment)

where value is the best contract compatibility over active bank skills, or
the NEW-skill base score when no skill clears the match bar. Ties prefer
fewer segments, then earlier cuts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

from ..bank import Bank, EffectContract, SkillInstance, jaccard, signed_effects
from ..trajectory import Trajectory
from .boundaries import CandidateBoundary
from .params import MaintenanceParams

NEW = "NEW"
JACCARD_WEIGHT = 0.9
SUPPORT_WEIGHT = 0.1


@dataclass(frozen=True)
class LabeledSegment:
    trajectory_id: str
    t0: int
    t1: int
    label: str
    confidence: float
    add: frozenset[str]
    delete: frozenset[str]
    segment_reward: float
    value: float = 0.0
    margin: float = 1.0
    start_predicates: frozenset[str] = frozenset()
    end_predicates: frozenset[str] = frozenset()
    intentions: tuple[str, ...] = ()
    actions: tuple[str, ...] = ()

    @property
    def is_new(self) -> bool:
        return self.label == NEW

    @property
    def effects(self) -> frozenset[str]:
        return signed_effects(self.add, self.delete)

    def to_instance(self, iteration: int) -> SkillInstance:
        return SkillInstance(self.trajectory_id, self.t0, self.t1, self.add, self.delete,
                             self.segment_reward, iteration, self.start_predicates,
                             self.end_predicates, self.intentions, self.actions)

    def to_dict(self) -> dict[str, Any]:
        return {"trajectory_id": self.trajectory_id, "span": [self.t0, self.t1],
                "label": self.label, "confidence": self.confidence, "add": sorted(self.add),
                "del": sorted(self.delete), "segment_reward": self.segment_reward,
                "value": self.value, "margin": self.margin,
                "start_predicates": sorted(self.start_predicates),
                "end_predicates": sorted(self.end_predicates),
                "intentions": list(self.intentions), "actions": list(self.actions)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LabeledSegment":
        return cls(d["trajectory_id"], int(d["span"][0]), int(d["span"][1]), d["label"],
                   float(d["confidence"]), frozenset(d["add"]), frozenset(d["del"]),
                   float(d["segment_reward"]), float(d["value"]), float(d["margin"]),
                   frozenset(d["start_predicates"]), frozenset(d["end_predicates"]),
                   tuple(d["intentions"]), tuple(d["actions"]))


def segment_effects(traj: Trajectory, t0: int, t1: int) -> tuple[frozenset[str], frozenset[str]]:
    """(added, deleted) predicates between the states at t0 and t1."""
    T = len(traj.experiences)
    if not 0 <= t0 < t1 <= T:
        raise ValueError(f"span [{t0}, {t1}) out of range for trajectory of length {T}")
    start = traj.state_at(t0).predicates
    end = traj.state_at(t1).predicates
    return end - start, start - end


def compatibility(effects: frozenset[str], contract: EffectContract, support: int,
                  max_support: int) -> float:
    """Contract overlap of a segment's signed effects plus a small support bonus."""
    if not 0 <= support <= max_support:
        raise ValueError("need 0 <= support <= max_support")
    bonus = math.log1p(support) / math.log1p(max_support) if max_support > 0 else 0.0
    return JACCARD_WEIGHT * jaccard(effects, contract.effects) + SUPPORT_WEIGHT * bonus


@dataclass
class SegmentScorer:
    """Caches per-span labeling for one trajectory against one bank snapshot."""

    traj: Trajectory
    bank: Bank
    params: MaintenanceParams
    _cache: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.skills = self.bank.active_skills()
        self.max_support = max((s.support for s in self.skills), default=0)

    def ranked(self, t0: int, t1: int) -> list[tuple[float, str]]:
        """Skill compatibilities for the span, best first (ties by id)."""
        key = (t0, t1)
        if key not in self._cache:
            add, delete = segment_effects(self.traj, t0, t1)
            eff = signed_effects(add, delete)
            scores = [(compatibility(eff, s.contract, s.support, self.max_support), s.id)
                      for s in self.skills]
            scores.sort(key=lambda p: (-p[0], p[1]))
            self._cache[key] = scores
        return self._cache[key]

    def label(self, t0: int, t1: int) -> tuple[str, float, float]:
        """(label, confidence, value) for a span."""
        ranked = self.ranked(t0, t1)
        if ranked and ranked[0][0] >= self.params.tau_match:
            return ranked[0][1], ranked[0][0], ranked[0][0]
        return NEW, 0.0, self.params.delta_new

    def weighted_value(self, t0: int, t1: int) -> float:
        return (t1 - t0) / len(self.traj.experiences) * self.label(t0, t1)[2]

    def margin(self, t0: int, t1: int) -> float:
        ranked = self.ranked(t0, t1)
        if len(ranked) < 2:
            return 1.0
        return ranked[0][0] - ranked[1][0]


def cut_positions(traj: Trajectory, candidates: Iterable[CandidateBoundary | int]) -> list[int]:
    T = len(traj.experiences)
    ts = {c.t if isinstance(c, CandidateBoundary) else int(c) for c in candidates}
    return [0] + sorted(t for t in ts if 0 < t < T) + [T]


def tiling_objective(scorer: SegmentScorer, bounds: Sequence[int]) -> float:
    total = 0.0
    for a, b in zip(bounds, bounds[1:]):
        total += scorer.weighted_value(a, b)
    return total


def decode(scorer: SegmentScorer, positions: Sequence[int]) -> tuple[list[int], float]:
    """Best tiling over ``positions`` (first is 0, last is T). Returns (bounds, objective).

    Path objectives are summed exactly as rationals so that ties between tilings
    do not depend on float addition order; the result is rounded once.
    """
    n = len(positions)
    # best[j]: (objective, segment count, bounds) for the prefix ending at positions[j]
    best: list[tuple[Fraction, int, tuple[int, ...]] | None] = [None] * n
    best[0] = (Fraction(0), 0, (positions[0],))
    for j in range(1, n):
        for i in range(j):
            prev = best[i]
            value = Fraction(scorer.weighted_value(positions[i], positions[j]))
            cand = (prev[0] + value, prev[1] + 1, prev[2] + (positions[j],))
            cur = best[j]
            if (cur is None or cand[0] > cur[0]
                    or (cand[0] == cur[0] and (cand[1], cand[2]) < (cur[1], cur[2]))):
                best[j] = cand
    obj, _, bounds = best[-1]
    return list(bounds), float(obj)


def infer_segmentation(traj: Trajectory, candidates: Iterable[CandidateBoundary | int],
                       bank: Bank, params: MaintenanceParams = MaintenanceParams(),
                       oracle=None) -> list[LabeledSegment]:
    """Decode the best tiling and label each segment with a bank skill or NEW.

    With an oracle, the top matching skills of each segment are re-ranked by
    it; the stub oracle keeps the compatibility order.
    """
    if not traj.experiences:
        raise ValueError("cannot segment an empty trajectory")
    scorer = SegmentScorer(traj, bank, params)
    bounds, _ = decode(scorer, cut_positions(traj, candidates))
    return label_tiling(traj, scorer, bounds, oracle)


def label_tiling(traj: Trajectory, scorer: SegmentScorer, bounds: Sequence[int],
                 oracle=None) -> list[LabeledSegment]:
    segments = []
    for t0, t1 in zip(bounds, bounds[1:]):
        label, conf, value = scorer.label(t0, t1)
        if oracle is not None and label != NEW:
            top = [(s, sid) for s, sid in scorer.ranked(t0, t1)[:3] if s >= scorer.params.tau_match]
            if len(top) > 1:
                perm = oracle.rerank([sid for _, sid in top],
                                     {"span": [t0, t1], "trajectory": traj.episode_id})
                conf, label = top[perm[0]]
        add, delete = segment_effects(traj, t0, t1)
        span = traj.experiences[t0:t1]
        reward = 0.0
        for e in span:
            reward += e.r
        segments.append(LabeledSegment(
            traj.episode_id, t0, t1, label, conf, add, delete, reward, value,
            scorer.margin(t0, t1), traj.state_at(t0).predicates, traj.state_at(t1).predicates,
            tuple(e.z for e in span), tuple(e.a.describe() for e in span)))
    return segments


def save_segments(path: str | Path, segments: Iterable[LabeledSegment]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for seg in segments:
            fh.write(json.dumps(seg.to_dict(), sort_keys=True) + "\n")


def load_segments(path: str | Path) -> list[LabeledSegment]:
    with Path(path).open(encoding="utf-8") as fh:
        return [LabeledSegment.from_dict(json.loads(line)) for line in fh if line.strip()]
