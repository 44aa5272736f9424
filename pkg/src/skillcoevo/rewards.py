"""Reward signals: per-step action reward with skill-following shaping, and the
composite rewards used to score retrieval, segmentation, contracts and curation.

Nothing here is optimized against; the values are logged, ranked and tested.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .bank import Bank, BankMutation, EffectContract, SkillInstance
from .discovery.contracts import consensus_effects, instance_passes
from .discovery.params import MaintenanceParams
from .discovery.segmentation import LabeledSegment
from .envs import ConfigError
from .trajectory import Trajectory

EPS = 1e-6


@dataclass(frozen=True)
class RewardParams:
    lambda_f: float = 0.1
    bonus_new_predicate: float = 0.1
    bonus_all_predicates: float = 0.5
    penalty_no_progress: float = -0.02
    c_switch: float = -0.05
    w_env: float = 0.4
    w_eff: float = 0.15
    w_contract: float = 0.25
    w_abort: float = 0.15
    w_conf: float = 0.05
    # contract size at which the sparsity term reaches zero
    sparsity_cap: int = 16

    def __post_init__(self) -> None:
        if self.lambda_f < 0:
            raise ConfigError("lambda_f must be >= 0")
        weights = (self.w_env, self.w_eff, self.w_contract, self.w_abort, self.w_conf)
        if min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-9:
            raise ConfigError(f"retrieval weights must be non-negative and sum to 1, got {weights}")
        if self.sparsity_cap < 1:
            raise ConfigError("sparsity_cap must be >= 1")


# --- per-step shaping -------------------------------------------------------

def satisfied_effects(contract: EffectContract, preds: Iterable[str]) -> frozenset[str]:
    """Signed effect literals of the contract that hold in ``preds``."""
    preds = frozenset(preds)
    return frozenset(["+" + p for p in contract.add if p in preds]
                     + ["-" + p for p in contract.delete if p not in preds])


def follow_shaping(contract: EffectContract, preds_before: Iterable[str], preds_after: Iterable[str],
                   already_satisfied: Iterable[str] = frozenset(),
                   params: RewardParams = RewardParams()) -> tuple[float, frozenset[str]]:
    """Shaping for one step under an active contract.

    Returns ``(r_follow, satisfied)`` where ``satisfied`` is ``already_satisfied``
    plus the effects that became true on this step. An effect earns its bonus
    at most once per skill episode.
    """
    already = frozenset(already_satisfied)
    newly = (satisfied_effects(contract, preds_after) - satisfied_effects(contract, preds_before)
             - already)
    satisfied = already | newly
    if not newly:
        return params.penalty_no_progress, satisfied
    r = params.bonus_new_predicate * len(newly)
    effects = contract.effects
    if effects <= satisfied and not effects <= already:
        r += params.bonus_all_predicates
    return r, satisfied


def action_reward(r_env: float, r_follow: float, switched: bool,
                  params: RewardParams = RewardParams()) -> float:
    """r_t = r_env + lambda_f * r_follow (+ c_switch on a switch)."""
    r = r_env + params.lambda_f * r_follow
    if switched:
        r += params.c_switch
    return r


# --- skill retrieval -------------------------------------------------------

@dataclass(frozen=True)
class SkillEpisodeStats:
    """One contiguous run of an active skill inside an episode."""

    env_reward_sum: float
    env_reward_norm: float
    duration: int
    horizon: int
    contract_completion: float
    aborted: bool
    retrieval_confidence: float
    skill_id: str = ""

    def __post_init__(self) -> None:
        if self.horizon < 1 or not 0 <= self.duration <= self.horizon:
            raise ValueError("need 0 <= duration <= horizon and horizon >= 1")
        for name in ("env_reward_norm", "contract_completion", "retrieval_confidence"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def retrieval_reward(stats: SkillEpisodeStats, params: RewardParams = RewardParams()) -> float:
    return (params.w_env * stats.env_reward_norm
            + params.w_eff * (1.0 - stats.duration / stats.horizon)
            + params.w_contract * stats.contract_completion
            - params.w_abort * float(stats.aborted)
            + params.w_conf * stats.retrieval_confidence)


def skill_episode_stats(trajs: Sequence[Trajectory], horizon: int | None = None) -> list[SkillEpisodeStats]:
    """Cut trajectories into runs of one active skill and summarize each run.

    Reads the ``retrieval_score``, ``contract_progress`` and ``trigger`` info
    fields written by the agent. env_reward_norm divides by the largest
    positive run reward in the batch.
    """
    runs: list[dict[str, Any]] = []
    for traj in trajs:
        h = horizon or max(1, traj.primitive_length)
        cur: dict[str, Any] | None = None
        for e in traj.experiences:
            if e.mode == "skill_selection":
                if cur is not None:
                    cur["aborted"] = e.info.get("trigger") == "abort"
                    runs.append(cur)
                cur = {"skill_id": e.active_skill, "reward": 0.0, "duration": 0, "horizon": h,
                       "completion": 0.0, "aborted": False,
                       "confidence": float(e.info.get("retrieval_score", 0.0))}
                continue
            if cur is not None and e.active_skill != cur["skill_id"]:
                cur["aborted"] = e.info.get("trigger") == "abort"
                runs.append(cur)
                cur = None
            if cur is not None:
                cur["reward"] += e.r
                cur["duration"] += 1
                cur["completion"] = float(e.info.get("contract_progress", cur["completion"]))
        if cur is not None:
            runs.append(cur)
    scale = max([r["reward"] for r in runs if r["reward"] > 0], default=0.0)
    return [SkillEpisodeStats(r["reward"], r["reward"] / scale if scale > 0 else 0.0,
                              min(r["duration"], r["horizon"]), r["horizon"],
                              min(1.0, max(0.0, r["completion"])), r["aborted"],
                              min(1.0, max(0.0, r["confidence"])), r["skill_id"] or "")
            for r in runs]


# --- segmentation ----------------------------------------------------------

def _positive_mass(traj: Trajectory, t0: int, t1: int) -> float:
    total = 0.0
    for e in traj.experiences[t0:t1]:
        total += max(e.r, 0.0)
    return total


def segmentation_reward(traj: Trajectory, segments: Sequence[LabeledSegment], bank: Bank,
                        params: MaintenanceParams = MaintenanceParams()) -> dict[str, float]:
    """Component breakdown plus ``total`` for one decoded trajectory.

    coverage: positive reward mass inside matched segments over all positive
    mass; mass inside NEW segments counts with weight 0.5 * delta_new.
    value_match: mean of skill quality times normalized segment reward.
    objective: the decoder's length-weighted value, already in [0, 1].
    margin: mean best-minus-second-best compatibility per segment.
    """
    if not segments:
        raise ValueError("no segments")
    T = len(traj.experiences)
    if segments[0].t0 != 0 or segments[-1].t1 != T or any(
            a.t1 != b.t0 for a, b in zip(segments, segments[1:])):
        raise ValueError("segments do not tile the trajectory")
    total_pos = _positive_mass(traj, 0, T)
    if total_pos > 0:
        covered = 0.0
        for s in segments:
            w = 0.5 * params.delta_new if s.is_new else 1.0
            covered += w * _positive_mass(traj, s.t0, s.t1)
        coverage = covered / total_pos
    else:
        coverage = 1.0
    scale = max([s.segment_reward for s in segments if s.segment_reward > 0], default=0.0)
    matches = []
    for s in segments:
        quality = 0.0 if s.is_new or s.label not in bank.skills else bank.skills[s.label].quality
        norm = max(0.0, s.segment_reward) / scale if scale > 0 else 0.0
        matches.append(quality * norm)
    value_match = float(np.mean(matches))
    objective = 0.0
    for s in segments:
        objective += (s.t1 - s.t0) / T * s.value
    margin = float(np.mean([s.margin for s in segments]))
    total = 0.4 * coverage + 0.2 * value_match + 0.25 * objective + 0.15 * margin
    return {"coverage": coverage, "value_match": value_match, "objective": objective,
            "margin": margin, "total": total}


# --- contracts ---------------------------------------------------------------

def f1(predicted: Iterable[str], observed: Iterable[str]) -> float:
    """Set F1; two empty sets score 1."""
    p, o = set(predicted), set(observed)
    if not p and not o:
        return 1.0
    tp = len(p & o)
    if tp == 0:
        return 0.0
    precision, recall = tp / len(p), tp / len(o)
    return 2 * precision * recall / (precision + recall)


def contract_reward(contract: EffectContract, train: Sequence[SkillInstance],
                    holdout: Sequence[SkillInstance] | None = None,
                    params: RewardParams = RewardParams(),
                    theta_consensus: float = 0.6) -> dict[str, float]:
    if not train:
        raise ValueError("contract_reward needs at least one training instance")
    effects = contract.effects
    consensus = consensus_effects(train, theta_consensus)
    if not holdout:
        fit = float(np.mean([f1(effects, inst.effects) for inst in train]))
        coverage = len(effects & consensus) / len(consensus) if consensus else 1.0
        sparsity = max(0.0, 1.0 - len(effects) / params.sparsity_cap)
        observed = frozenset().union(*(inst.effects for inst in train))
        specificity = len(effects & observed) / len(effects) if effects else 1.0
        total = 0.6 * fit + 0.2 * coverage + 0.1 * sparsity + 0.1 * specificity
        return {"f1": fit, "coverage": coverage, "sparsity": sparsity,
                "specificity": specificity, "total": total}
    weights = [max(h.segment_reward, 0.0) + EPS for h in holdout]
    passes = [float(instance_passes(contract, h)) for h in holdout]
    weighted = sum(w * p for w, p in zip(weights, passes)) / sum(weights)
    agreement = f1(effects, consensus)
    cut = float(np.percentile([h.segment_reward for h in holdout], 75))
    top = [p for h, p in zip(holdout, passes) if h.segment_reward >= cut]
    alignment = float(np.mean(top))
    total = 0.5 * weighted + 0.3 * agreement + 0.2 * alignment
    return {"weighted_pass": weighted, "f1": agreement, "reward_alignment": alignment,
            "total": total}


# --- curator -----------------------------------------------------------------

_NUMBER_RE = re.compile(r"(?<![A-Za-z_])[-+]?\d+(?:\.\d+)?")


def cited_numbers(reason: str) -> int:
    return len(_NUMBER_RE.findall(reason))


def curator_reward(mutation: BankMutation, evidence: dict[str, Any] | None = None,
                   n_mat: int = 10) -> dict[str, float]:
    """Score one curation decision against its evidence.

    quality_alignment is +1 when the decision agrees with whether the
    post-mutation quality is at least the pre-mutation quality, else -1.
    """
    if evidence is None:
        evidence = mutation.payload.get("evidence", {})
    pre = float(evidence.get("pre_quality", 0.0))
    post = float(evidence.get("post_quality", pre))
    improves = post >= pre
    alignment = 1.0 if mutation.approved == improves else -1.0
    exploration = float(mutation.approved and mutation.kind == "materialize"
                        and evidence.get("n_instances", 0) >= n_mat)
    reason_quality = float(cited_numbers(mutation.reason) >= 2)
    total = 0.5 * alignment + 0.3 * exploration + 0.2 * reason_quality
    return {"quality_alignment": alignment, "exploration": exploration,
            "reason_quality": reason_quality, "total": total}


def mean_or_nan(values: Iterable[float]) -> float:
    values = list(values)
    return float(np.mean(values)) if values else math.nan


__all__ = [
    "EPS", "RewardParams", "SkillEpisodeStats", "action_reward", "cited_numbers",
    "contract_reward", "curator_reward", "f1", "follow_shaping", "mean_or_nan",
    "retrieval_reward", "satisfied_effects", "segmentation_reward", "skill_episode_stats",
]
