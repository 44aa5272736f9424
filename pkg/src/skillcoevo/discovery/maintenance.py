"""Bank maintenance: refine, materialize, merge, split, retire, with curator approval."""

from __future__ import annotations

import re
from collections import Counter
from typing import Any, Iterable, Sequence

from ..bank import (Bank, BankError, BankMutation, Skill, SkillInstance, SkillProtocol, jaccard,
                    replace_contract)
from .contracts import learn_contract, min_count, verify_contract
from .params import MaintenanceParams
from .segmentation import LabeledSegment


STOPWORDS = frozenset("a an the to of on in at for and or with by from into toward towards "
                      "via up down left right".split())
PLAN_LENGTH = 3
_WORD_RE = re.compile(r"[a-z0-9]+")


# --- curator -----------------------------------------------------------------

def rule_approves(kind: str, evidence: dict[str, Any], params: MaintenanceParams) -> bool:
    """Deterministic default curator."""
    if kind == "refine":
        return (evidence["new_pass_rate"] >= evidence["old_pass_rate"]
                and evidence["new_pass_rate"] >= params.theta_verify)
    if kind == "materialize":
        return (evidence["n_instances"] >= params.n_mat
                and evidence["pass_rate"] >= params.theta_verify
                and evidence["n_effects"] > 0)
    if kind == "merge":
        return evidence["jaccard"] >= params.theta_merge
    if kind == "split":
        if evidence.get("stage") == "execute":
            return True
        return (evidence["pass_rate"] < params.theta_split_pass
                and evidence["n_instances"] >= params.n_mat
                and evidence["min_cluster_fraction"] >= params.split_cluster_min)
    if kind == "retire":
        return evidence["idle_iterations"] >= params.retire_window
    raise ValueError(f"unknown mutation kind {kind!r}")


def curate(mutation: BankMutation, evidence: dict[str, Any], params: MaintenanceParams,
           oracle=None) -> bool:
    approved = rule_approves(mutation.kind, evidence, params)
    if oracle is not None:
        approved = oracle.approve(mutation, evidence, default=approved)
    mutation.approved = approved
    return approved


# --- helpers ------------------------------------------------------------------

def _most_common(items: Iterable[str]) -> str | None:
    """Most frequent item; ties go to the one seen first."""
    counts = Counter(items)
    if not counts:
        return None
    return max(counts, key=counts.__getitem__)


def dominant_category(instances: Sequence[SkillInstance]) -> str:
    """First content word of the most frequent intention tag."""
    tag = _most_common(z for inst in instances for z in inst.intentions) or ""
    words = [w for w in _WORD_RE.findall(tag.lower()) if w not in STOPWORDS and not w.isdigit()]
    return words[0] if words else "misc"


def template_protocol(instances: Sequence[SkillInstance], add: frozenset[str],
                      params: MaintenanceParams) -> SkillProtocol:
    summary = _most_common(z for inst in instances for z in inst.intentions) or "reusable behavior"
    need = params.theta_consensus * len(instances) - 1e-9
    starts = Counter(p for inst in instances for p in inst.start_predicates)
    precondition = frozenset(p for p, c in starts.items() if c >= need)
    first_seen: dict[str, int] = {}
    counts: Counter = Counter()
    for inst in instances:
        for a in inst.actions:
            first_seen.setdefault(a, len(first_seen))
            counts[a] += 1
    top = sorted(counts, key=lambda a: (-counts[a], first_seen[a]))[:PLAN_LENGTH]
    return SkillProtocol(summary, precondition, tuple(top) or ("act",), add, frozenset())


def draft_protocol(instances: Sequence[SkillInstance], add: frozenset[str],
                   params: MaintenanceParams, oracle=None) -> SkillProtocol:
    proto = template_protocol(instances, add, params)
    if oracle is None:
        return proto
    drafted = oracle.draft_protocol({
        "intentions": sorted({z for i in instances for z in i.intentions}),
        "actions": list(proto.plan), "effects": sorted(add)})
    return SkillProtocol(
        drafted.get("summary") or proto.summary,
        proto.precondition,
        tuple(drafted.get("plan") or proto.plan),
        proto.success,
        proto.abort,
    )


def effect_clusters(instances: Sequence[SkillInstance]) -> tuple[list[SkillInstance], list[SkillInstance]]:
    """Two-way split of instances around the two most dissimilar effect signatures."""
    sigs = Counter(inst.effects for inst in instances)
    order = sorted(sigs, key=lambda s: (-sigs[s], sorted(s)))
    seed_a = order[0]
    seed_b = min(order, key=lambda s: (jaccard(s, seed_a), -sigs[s], sorted(s)))
    if seed_b == seed_a:
        return list(instances), []
    a, b = [], []
    for inst in instances:
        (a if jaccard(inst.effects, seed_a) >= jaccard(inst.effects, seed_b) else b).append(inst)
    return a, b


def _summarize(oracle, instances: Sequence[SkillInstance], theta: float) -> list[str]:
    if oracle is None:
        return []
    counts = Counter(e for inst in instances for e in inst.effects)
    return oracle.summarize_contract({"effect_counts": dict(sorted(counts.items())),
                                      "n_instances": len(instances),
                                      "min_count": min_count(theta, len(instances))})


def _new_skill(bank: Bank, members: Sequence[SkillInstance], params: MaintenanceParams,
               iteration: int, oracle=None) -> tuple[Skill, float]:
    contract = learn_contract(members, params.theta_consensus,
                              suggestions=_summarize(oracle, members, params.theta_consensus))
    pass_rate = verify_contract(contract, members)
    category = dominant_category(members)
    # the id is assigned only once the curator approves
    skill = Skill("", category,
                  draft_protocol(members, contract.add, params, oracle),
                  replace_contract(contract, pass_rate=pass_rate, support=len(members)),
                  list(members), created_iter=iteration, updated_iter=iteration)
    return skill, pass_rate


# --- stages ------------------------------------------------------------------

def maintain_bank(bank: Bank, segments: Sequence[LabeledSegment],
                  params: MaintenanceParams = MaintenanceParams(), iteration: int | None = None,
                  oracle=None) -> tuple[Bank, list[BankMutation]]:
    """One bank update from a batch of labeled segments.

    Returns a new bank (the input is untouched) with version + 1, and every
    proposed mutation with its approval flag.
    """
    new = bank.snapshot()
    u = bank.version + 1 if iteration is None else iteration
    mutations: list[BankMutation] = []

    def propose(kind: str, payload: dict[str, Any], evidence: dict[str, Any], reason: str) -> bool:
        m = BankMutation(kind, {**payload, "evidence": evidence}, False, reason, u)
        mutations.append(m)
        return curate(m, evidence, params, oracle)

    # 1. instances for matched labels
    touched: set[str] = set()
    for seg in segments:
        if seg.is_new:
            continue
        if seg.label not in new.skills:
            raise BankError(f"segment references unknown skill id {seg.label!r}")
        new.record_instance(seg.label, seg.to_instance(u))
        touched.add(seg.label)

    # 2. refine
    for sid in sorted(touched):
        skill = new.skills[sid]
        old_pass = verify_contract(skill.contract, skill.instances)
        hints = _summarize(oracle, skill.instances, params.theta_consensus)
        draft = learn_contract(skill.instances, params.theta_consensus, prior=skill.contract,
                               suggestions=hints)
        if draft.effects == skill.contract.effects:
            skill.contract = replace_contract(skill.contract, pass_rate=old_pass)
            new.refresh_quality(sid)
            continue
        new_pass = verify_contract(draft, skill.instances)
        pre_quality = skill.quality
        gained = sorted(draft.effects - skill.contract.effects)
        lost = sorted(skill.contract.effects - draft.effects)
        evidence = {"old_pass_rate": old_pass, "new_pass_rate": new_pass,
                    "n_instances": skill.support, "pre_quality": pre_quality}
        reason = (f"{sid}: pass rate {old_pass:.3f} -> {new_pass:.3f} over {skill.support} "
                  f"instances; +{len(gained)} / -{len(lost)} effects")
        candidate = replace_contract(draft, pass_rate=new_pass)
        skill_post = new.compute_quality(Skill(sid, skill.category, skill.protocol, candidate,
                                               skill.instances))
        evidence["post_quality"] = skill_post
        if propose("refine", {"skill_id": sid, "from_version": skill.contract.version,
                              "to_version": draft.version, "gained": gained, "lost": lost},
                   evidence, reason):
            skill.contract = candidate
            skill.updated_iter = u
        else:
            skill.contract = replace_contract(skill.contract, pass_rate=old_pass)
        new.refresh_quality(sid)

    # 3. buffer NEW segments with a non-empty effect signature
    for seg in segments:
        if seg.is_new and seg.effects:
            new.buffer.add(seg.to_instance(u), params.theta_group, u)

    # 4a. materialize buffered groups
    for group in list(new.buffer.groups):
        if len(group.members) < params.n_mat:
            continue
        skill, pass_rate = _new_skill(new, group.members, params, u, oracle)
        evidence = {"n_instances": len(group.members), "pass_rate": pass_rate,
                    "n_effects": len(skill.contract.effects), "pre_quality": 0.0,
                    "post_quality": new.compute_quality(skill)}
        reason = (f"group {group.key}: {len(group.members)} instances (N_mat={params.n_mat}), "
                  f"draft pass rate {pass_rate:.3f}")
        payload = {"group_key": group.key, "effects": sorted(skill.contract.effects)}
        if propose("materialize", payload, evidence, reason):
            skill.id = new.new_skill_id(skill.category)
            mutations[-1].payload["skill_id"] = skill.id
            new.upsert_new(skill)
            new.buffer.groups.remove(group)

    # 4b. carry out splits flagged in earlier iterations
    # children are recorded on the split mutation itself, not as materializations
    for skill in [s for _, s in sorted(new.skills.items()) if s.status == "flagged_split"]:
        children = []
        for part in effect_clusters(skill.instances):
            if part:
                child, pass_rate = _new_skill(new, part, params, u, oracle)
                if child.contract.effects:
                    children.append((child, pass_rate))
        evidence = {"stage": "execute", "n_instances": skill.support,
                    "child_sizes": [c.support for c, _ in children],
                    "child_pass_rates": [p for _, p in children], "pre_quality": skill.quality,
                    "post_quality": max([new.compute_quality(c) for c, _ in children],
                                        default=skill.quality)}
        reason = (f"{skill.id} split into {len(children)} children from {skill.support} "
                  f"instances")
        payload = {"skill_id": skill.id, "stage": "execute", "children": []}
        if propose("split", payload, evidence, reason):
            for child, _ in children:
                child.id = new.new_skill_id(child.category)
                new.upsert_new(child)
                payload["children"].append(child.id)
            skill.status = "retired"
            skill.updated_iter = u

    # 5. merge near-duplicates
    rejected: set[tuple[str, str]] = set()
    while True:
        pair = _merge_candidate(new, params, rejected)
        if pair is None:
            break
        a, b, sim = pair
        winner, loser = sorted((a, b), key=lambda s: (-s.quality, s.id))
        evidence = {"jaccard": sim, "winner_quality": winner.quality,
                    "loser_quality": loser.quality, "pre_quality": winner.quality,
                    "n_instances": winner.support + loser.support}
        reason = (f"contract jaccard {sim:.3f} >= {params.theta_merge}; keep {winner.id} "
                  f"(quality {winner.quality:.3f}) over {loser.id} (quality {loser.quality:.3f})")
        if propose("merge", {"winner": winner.id, "loser": loser.id}, evidence, reason):
            winner.instances = winner.instances + loser.instances
            pass_rate = (verify_contract(winner.contract, winner.instances)
                         if winner.instances else winner.contract.pass_rate)
            winner.contract = replace_contract(winner.contract,
                                               version=winner.contract.version + 1,
                                               pass_rate=pass_rate, support=winner.support)
            winner.updated_iter = u
            loser.status = "retired"
            loser.updated_iter = u
            new.refresh_all_quality()
            evidence["post_quality"] = winner.quality
        else:
            rejected.add((a.id, b.id))

    # 6. flag broad or inconsistent skills for re-segmentation
    for skill in new.active_skills():
        if skill.support < params.n_mat or skill.contract.pass_rate >= params.theta_split_pass:
            continue
        part_a, part_b = effect_clusters(skill.instances)
        frac = min(len(part_a), len(part_b)) / skill.support
        if frac < params.split_cluster_min:
            continue
        evidence = {"stage": "flag", "pass_rate": skill.contract.pass_rate,
                    "n_instances": skill.support, "min_cluster_fraction": frac,
                    "pre_quality": skill.quality, "post_quality": skill.quality}
        reason = (f"{skill.id}: pass rate {skill.contract.pass_rate:.3f} < "
                  f"{params.theta_split_pass}; clusters {len(part_a)}/{len(part_b)}")
        if propose("split", {"skill_id": skill.id, "stage": "flag",
                             "clusters": [len(part_a), len(part_b)]}, evidence, reason):
            skill.status = "flagged_split"
            skill.updated_iter = u

    # 7. retire idle skills
    for skill in new.active_skills():
        idle = u - skill.last_used_iter
        if idle < params.retire_window:
            continue
        evidence = {"idle_iterations": idle, "n_instances": skill.support,
                    "pre_quality": skill.quality, "post_quality": skill.quality}
        reason = f"{skill.id}: 0 new instances over {idle} iterations (K={params.retire_window})"
        if propose("retire", {"skill_id": skill.id}, evidence, reason):
            skill.status = "retired"
            skill.updated_iter = u

    # stale buffer groups are dropped after the retire window
    new.buffer.groups = [g for g in new.buffer.groups
                         if u - g.last_seen < params.retire_window]

    new.refresh_all_quality()
    new.version = bank.version + 1
    new.mutation_log.extend(mutations)
    return new, mutations


def _merge_candidate(bank: Bank, params: MaintenanceParams, rejected: set):
    active = bank.active_skills()
    for i, a in enumerate(active):
        for b in active[i + 1:]:
            if (a.id, b.id) in rejected:
                continue
            sim = jaccard(a.contract.effects, b.contract.effects)
            if sim >= params.theta_merge:
                return a, b, sim
    return None
