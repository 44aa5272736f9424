"""Consensus effect-contract learning and verification."""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Sequence

from ..bank import EffectContract, SkillInstance


def min_count(theta: float, n: int) -> int:
    # guard against 0.7 * 10 == 7.000000000000001
    return max(1, math.ceil(theta * n - 1e-9))


def effect_counts(instances: Sequence[SkillInstance]) -> Counter:
    counts: Counter = Counter()
    for inst in instances:
        counts.update(inst.effects)
    return counts


def consensus_effects(instances: Sequence[SkillInstance], theta: float) -> frozenset[str]:
    need = min_count(theta, len(instances))
    return frozenset(e for e, c in effect_counts(instances).items() if c >= need)


def _split_signed(effects: Iterable[str], counts: Counter) -> tuple[frozenset, frozenset]:
    add = {e[1:] for e in effects if e.startswith("+")}
    delete = {e[1:] for e in effects if e.startswith("-")}
    # a predicate kept both ways can only happen for theta <= 0.5; keep the more frequent side
    for p in add & delete:
        plus, minus = counts["+" + p], counts["-" + p]
        if plus >= minus:
            delete.discard(p)
        if minus >= plus:
            add.discard(p)
    return frozenset(add), frozenset(delete)


def learn_contract(instances: Sequence[SkillInstance], theta_consensus: float = 0.6,
                   prior: EffectContract | None = None,
                   suggestions: Iterable[str] = ()) -> EffectContract:
    """Draft a contract from effects seen in at least ``theta_consensus`` of instances.

    ``suggestions`` are signed effect literals ("+p" / "-p") from an external
    summarizer; each is kept only if it reaches half the consensus bar on its own.
    """
    if not instances:
        raise ValueError("learn_contract needs at least one instance")
    counts = effect_counts(instances)
    kept = set(consensus_effects(instances, theta_consensus))
    half = min_count(theta_consensus / 2, len(instances))
    kept.update(e for e in suggestions if counts.get(e, 0) >= half)
    add, delete = _split_signed(kept, counts)
    version = prior.version + 1 if prior is not None else 1
    return EffectContract(add, delete, version=version, pass_rate=0.0, support=len(instances))


def instance_passes(contract: EffectContract, inst: SkillInstance) -> bool:
    end = inst.end_predicates
    return contract.add <= end and not (contract.delete & end)


def verify_contract(contract: EffectContract, instances: Sequence[SkillInstance]) -> float:
    """Fraction of instances whose end state satisfies every contract effect."""
    if not instances:
        raise ValueError("verify_contract needs at least one instance")
    passes = sum(1 for inst in instances if instance_passes(contract, inst))
    return passes / len(instances)
