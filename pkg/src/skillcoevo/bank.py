"""Versioned skill bank: protocols, effect contracts, instance evidence, retrieval."""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

SCHEMA_VERSION = 1
STATUSES = ("active", "retired", "flagged_split")
MUTATION_KINDS = ("refine", "materialize", "merge", "split", "retire")
# plumbing entries written by direct upserts; never curated
LOG_ONLY_KINDS = ("insert", "update")


class BankError(ValueError):
    """Invalid bank operation (unknown id, duplicate insert, version regression)."""


class BankIntegrityError(BankError):
    """A persisted bank violates a structural invariant."""


class SchemaVersionError(ValueError):
    """A persisted file carries an unsupported schema version."""


def signed_effects(add: Iterable[str], delete: Iterable[str]) -> frozenset[str]:
    """Effect literals: '+p' for an added predicate, '-p' for a deleted one."""
    return frozenset(["+" + p for p in add] + ["-" + p for p in delete])


def jaccard(a: Iterable, b: Iterable, empty: float = 1.0) -> float:
    a, b = set(a), set(b)
    union = a | b
    if not union:
        return empty
    return len(a & b) / len(union)


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokens(text: str) -> frozenset[str]:
    return frozenset(_TOKEN_RE.findall(text.lower()))


@dataclass(frozen=True)
class EffectContract:
    add: frozenset[str] = frozenset()
    delete: frozenset[str] = frozenset()
    version: int = 1
    pass_rate: float = 0.0
    support: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "add", frozenset(self.add))
        object.__setattr__(self, "delete", frozenset(self.delete))
        if self.add & self.delete:
            raise ValueError(f"contract add/del overlap: {sorted(self.add & self.delete)}")
        if self.version < 1:
            raise ValueError("contract version must be >= 1")
        if not 0.0 <= self.pass_rate <= 1.0:
            raise ValueError("pass_rate must lie in [0, 1]")

    @property
    def effects(self) -> frozenset[str]:
        return signed_effects(self.add, self.delete)

    def to_dict(self) -> dict[str, Any]:
        return {"add": sorted(self.add), "del": sorted(self.delete), "version": self.version,
                "pass_rate": self.pass_rate, "support": self.support}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EffectContract":
        return cls(frozenset(d["add"]), frozenset(d["del"]), int(d["version"]),
                   float(d["pass_rate"]), int(d["support"]))


@dataclass(frozen=True)
class SkillProtocol:
    summary: str
    precondition: frozenset[str] = frozenset()
    plan: tuple[str, ...] = ("act",)
    success: frozenset[str] = frozenset()
    abort: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "precondition", frozenset(self.precondition))
        object.__setattr__(self, "plan", tuple(self.plan))
        object.__setattr__(self, "success", frozenset(self.success))
        object.__setattr__(self, "abort", frozenset(self.abort))
        if not self.summary.strip():
            raise ValueError("protocol summary must be non-empty")
        if not self.plan:
            raise ValueError("protocol plan must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"summary": self.summary, "precondition": sorted(self.precondition),
                "plan": list(self.plan), "success": sorted(self.success),
                "abort": sorted(self.abort)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SkillProtocol":
        return cls(d["summary"], frozenset(d["precondition"]), tuple(d["plan"]),
                   frozenset(d["success"]), frozenset(d["abort"]))


@dataclass(frozen=True)
class SkillInstance:
    """One decoded segment ``[t0, t1)`` of a trajectory attributed to a skill."""

    trajectory_id: str
    t0: int
    t1: int
    add: frozenset[str]
    delete: frozenset[str]
    segment_reward: float = 0.0
    iteration: int = 0
    start_predicates: frozenset[str] = frozenset()
    end_predicates: frozenset[str] = frozenset()
    intentions: tuple[str, ...] = ()
    actions: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.t0 >= self.t1:
            raise ValueError(f"instance span must satisfy t0 < t1, got [{self.t0}, {self.t1})")
        for name in ("add", "delete", "start_predicates", "end_predicates"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        object.__setattr__(self, "intentions", tuple(self.intentions))
        object.__setattr__(self, "actions", tuple(self.actions))

    @property
    def effects(self) -> frozenset[str]:
        return signed_effects(self.add, self.delete)

    def to_dict(self) -> dict[str, Any]:
        return {"trajectory_id": self.trajectory_id, "span": [self.t0, self.t1],
                "add": sorted(self.add), "del": sorted(self.delete),
                "segment_reward": self.segment_reward, "iteration": self.iteration,
                "start_predicates": sorted(self.start_predicates),
                "end_predicates": sorted(self.end_predicates),
                "intentions": list(self.intentions), "actions": list(self.actions)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SkillInstance":
        return cls(d["trajectory_id"], int(d["span"][0]), int(d["span"][1]), frozenset(d["add"]),
                   frozenset(d["del"]), float(d["segment_reward"]), int(d["iteration"]),
                   frozenset(d["start_predicates"]), frozenset(d["end_predicates"]),
                   tuple(d["intentions"]), tuple(d["actions"]))


@dataclass
class Skill:
    id: str
    category: str
    protocol: SkillProtocol
    contract: EffectContract = field(default_factory=EffectContract)
    instances: list[SkillInstance] = field(default_factory=list)
    quality: float = 0.0
    status: str = "active"
    created_iter: int = 0
    updated_iter: int = 0

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"unknown skill status {self.status!r}")

    @property
    def support(self) -> int:
        return len(self.instances)

    @property
    def last_used_iter(self) -> int:
        return max([self.created_iter] + [inst.iteration for inst in self.instances])

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "category": self.category, "protocol": self.protocol.to_dict(),
                "contract": self.contract.to_dict(),
                "instances": [i.to_dict() for i in self.instances], "quality": self.quality,
                "status": self.status, "created_iter": self.created_iter,
                "updated_iter": self.updated_iter}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Skill":
        return cls(d["id"], d["category"], SkillProtocol.from_dict(d["protocol"]),
                   EffectContract.from_dict(d["contract"]),
                   [SkillInstance.from_dict(i) for i in d["instances"]], float(d["quality"]),
                   d["status"], int(d["created_iter"]), int(d["updated_iter"]))


@dataclass
class BankMutation:
    kind: str
    payload: dict[str, Any]
    approved: bool = False
    reason: str = ""
    iteration: int = 0

    def __post_init__(self) -> None:
        if self.kind not in MUTATION_KINDS + LOG_ONLY_KINDS:
            raise ValueError(f"unknown mutation kind {self.kind!r}")

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "payload": self.payload, "approved": self.approved,
                "reason": self.reason, "iteration": self.iteration}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BankMutation":
        return cls(d["kind"], d["payload"], bool(d["approved"]), d["reason"], int(d["iteration"]))


@dataclass
class BufferGroup:
    key: str
    signature: frozenset[str]
    members: list[SkillInstance] = field(default_factory=list)
    first_seen: int = 0
    last_seen: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"key": self.key, "signature": sorted(self.signature),
                "members": [m.to_dict() for m in self.members], "first_seen": self.first_seen,
                "last_seen": self.last_seen}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BufferGroup":
        return cls(d["key"], frozenset(d["signature"]),
                   [SkillInstance.from_dict(m) for m in d["members"]], int(d["first_seen"]),
                   int(d["last_seen"]))


@dataclass
class NewSkillBuffer:
    groups: list[BufferGroup] = field(default_factory=list)
    next_key: int = 0

    def add(self, inst: SkillInstance, theta_group: float, iteration: int) -> BufferGroup:
        """File a NEW segment under the most similar group, or open a new one."""
        sig = inst.effects
        best, best_sim = None, -1.0
        for group in self.groups:
            sim = jaccard(sig, group.signature)
            if sim >= theta_group and sim > best_sim:
                best, best_sim = group, sim
        if best is None:
            best = BufferGroup(f"g{self.next_key:04d}", sig, [], iteration, iteration)
            self.next_key += 1
            self.groups.append(best)
        best.members.append(inst)
        best.last_seen = iteration
        return best

    def to_dict(self) -> dict[str, Any]:
        return {"groups": [g.to_dict() for g in self.groups], "next_key": self.next_key}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NewSkillBuffer":
        return cls([BufferGroup.from_dict(g) for g in d["groups"]], int(d["next_key"]))


@dataclass(frozen=True)
class RetrievalWeights:
    precondition: float = 0.6
    quality: float = 0.3
    intention: float = 0.1


@dataclass(frozen=True)
class QualityWeights:
    pass_rate: float = 0.5
    reward: float = 0.3
    support: float = 0.2
    support_saturation: int = 20


@dataclass
class Bank:
    version: int = 0
    skills: dict[str, Skill] = field(default_factory=dict)
    buffer: NewSkillBuffer = field(default_factory=NewSkillBuffer)
    mutation_log: list[BankMutation] = field(default_factory=list)
    reward_scale: float = 0.0
    next_serial: int = 0
    quality_weights: QualityWeights = field(default_factory=QualityWeights)

    def snapshot(self) -> "Bank":
        return copy.deepcopy(self)

    def get(self, skill_id: str) -> Skill:
        try:
            return self.skills[skill_id]
        except KeyError:
            raise BankError(f"unknown skill id {skill_id!r}") from None

    def active_skills(self) -> list[Skill]:
        return [s for _, s in sorted(self.skills.items()) if s.status == "active"]

    def new_skill_id(self, category: str) -> str:
        slug = re.sub(r"[^a-z0-9]+", "_", category.lower()).strip("_") or "skill"
        while True:
            sid = f"{slug}_{self.next_serial:03d}"
            self.next_serial += 1
            if sid not in self.skills:
                return sid

    # -- mutation paths -------------------------------------------------

    def upsert(self, skill: Skill, insert: bool | None = None) -> "Bank":
        """Insert or replace a skill. Bank version is left unchanged."""
        existing = self.skills.get(skill.id)
        if insert and existing is not None:
            raise BankError(f"duplicate skill id {skill.id!r}")
        if insert is False and existing is None:
            raise BankError(f"unknown skill id {skill.id!r}")
        if existing is not None and skill.contract.version < existing.contract.version:
            raise BankError(f"contract version regression for {skill.id!r}: "
                            f"{skill.contract.version} < {existing.contract.version}")
        self.skills[skill.id] = skill
        self._note_rewards(skill.instances)
        self.refresh_quality(skill.id)
        kind = "update" if existing is not None else "insert"
        self.mutation_log.append(BankMutation(kind, {"skill_id": skill.id}, True,
                                              f"direct {kind}", self.version))
        return self

    def upsert_new(self, skill: Skill) -> "Bank":
        """Add a curated skill; the caller logs the mutation that created it."""
        if not skill.id or skill.id in self.skills:
            raise BankError(f"invalid or duplicate skill id {skill.id!r}")
        self.skills[skill.id] = skill
        self._note_rewards(skill.instances)
        self.refresh_all_quality()
        return self

    def record_instance(self, skill_id: str, inst: SkillInstance) -> "Bank":
        skill = self.get(skill_id)
        if skill.status != "active":
            raise BankError(f"cannot record an instance on {skill.status} skill {skill_id!r}")
        skill.instances.append(inst)
        skill.contract = _with(skill.contract, support=skill.support)
        skill.updated_iter = max(skill.updated_iter, inst.iteration)
        if self._note_rewards([inst]):
            self.refresh_all_quality()
        else:
            self.refresh_quality(skill_id)
        return self

    def _note_rewards(self, instances: Iterable[SkillInstance]) -> bool:
        changed = False
        for inst in instances:
            if inst.segment_reward > self.reward_scale:
                self.reward_scale = inst.segment_reward
                changed = True
        return changed

    # -- quality ---------------------------------------------------------

    def reward_norm(self, skill: Skill) -> float:
        if not skill.instances or self.reward_scale <= 0:
            return 0.0
        mean = sum(i.segment_reward for i in skill.instances) / len(skill.instances)
        return min(1.0, max(0.0, mean / self.reward_scale))

    def compute_quality(self, skill: Skill) -> float:
        w = self.quality_weights
        return math.fsum((w.pass_rate * skill.contract.pass_rate,
                          w.reward * self.reward_norm(skill),
                          w.support * min(1.0, skill.support / w.support_saturation)))

    def refresh_quality(self, skill_id: str) -> None:
        skill = self.skills[skill_id]
        skill.quality = self.compute_quality(skill)

    def refresh_all_quality(self) -> None:
        for sid in self.skills:
            self.refresh_quality(sid)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "version": self.version,
            "reward_scale": self.reward_scale,
            "next_serial": self.next_serial,
            "quality_weights": vars(self.quality_weights),
            "skills": [self.skills[k].to_dict() for k in sorted(self.skills)],
            "buffer": self.buffer.to_dict(),
            "mutation_log": [m.to_dict() for m in self.mutation_log],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Bank":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise SchemaVersionError(f"unsupported bank schema_version {d.get('schema_version')!r}")
        skills: dict[str, Skill] = {}
        for sd in d["skills"]:
            if sd["id"] in skills:
                raise BankIntegrityError(f"duplicate skill id {sd['id']!r} in bank file")
            skills[sd["id"]] = Skill.from_dict(sd)
        return cls(int(d["version"]), skills, NewSkillBuffer.from_dict(d["buffer"]),
                   [BankMutation.from_dict(m) for m in d["mutation_log"]],
                   float(d["reward_scale"]), int(d["next_serial"]),
                   QualityWeights(**d.get("quality_weights", {})))


def _with(contract: EffectContract, **changes) -> EffectContract:
    fields = dict(add=contract.add, delete=contract.delete, version=contract.version,
                  pass_rate=contract.pass_rate, support=contract.support)
    fields.update(changes)
    return EffectContract(**fields)


replace_contract = _with


def upsert_skill(bank: Bank, skill: Skill) -> Bank:
    return bank.upsert(skill)


def record_instance(bank: Bank, skill_id: str, inst: SkillInstance) -> Bank:
    return bank.record_instance(skill_id, inst)


def precondition_match(precondition: frozenset[str], preds: frozenset[str]) -> float:
    if not precondition:
        return 1.0
    return len(precondition & preds) / len(precondition)


def retrieval_score(bank: Bank, skill: Skill, preds: frozenset[str], intention: str,
                    weights: RetrievalWeights = RetrievalWeights()) -> float:
    overlap = jaccard(tokens(intention), tokens(skill.protocol.summary), empty=0.0)
    # fsum keeps a perfect match at exactly 1.0
    return math.fsum((weights.precondition * precondition_match(skill.protocol.precondition, preds),
                      weights.quality * skill.quality,
                      weights.intention * overlap))


def query_candidates(bank: Bank, preds: Iterable[str], intention: str, k: int = 3,
                     weights: RetrievalWeights = RetrievalWeights(),
                     exclude: Iterable[str] = ()) -> list[tuple[Skill, float]]:
    """Top-k active skills by retrieval score; ties break on skill id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    preds = frozenset(preds)
    skip = set(exclude)
    scored = [(s, retrieval_score(bank, s, preds, intention, weights))
              for s in bank.active_skills() if s.id not in skip]
    scored.sort(key=lambda pair: (-pair[1], pair[0].id))
    return scored[:k]


def save_bank(path: str | Path, bank: Bank) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(bank.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)


def load_bank(path: str | Path) -> Bank:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise BankError(f"{path}: not valid JSON ({e})") from e
    return Bank.from_dict(data)
