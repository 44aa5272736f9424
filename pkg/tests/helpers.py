"""Builders for synthetic trajectories, instances and skills."""

from __future__ import annotations

import hashlib
from pathlib import Path

from skillcoevo.bank import EffectContract, Skill, SkillInstance, SkillProtocol
from skillcoevo.envs import TextAction
from skillcoevo.trajectory import EpisodeBuffer, Experience, State, Trajectory


def make_state(t: int, preds, score: float = 0.0) -> State:
    preds = frozenset(preds)
    return State(t, preds, f"step {t}: " + ", ".join(sorted(preds)),
                 {"predicates": sorted(preds)}, score)


def make_traj(pred_seq, rewards=None, tags=None, modes=None, episode_id="synthetic") -> Trajectory:
    """Trajectory over states pred_seq[0..T] with T = len(pred_seq) - 1 steps."""
    T = len(pred_seq) - 1
    rewards = rewards if rewards is not None else [0.0] * T
    tags = tags if tags is not None else ["act"] * T
    modes = modes if modes is not None else ["primitive_action"] * T
    score = 0.0
    states = []
    for t, preds in enumerate(pred_seq):
        if t:
            score += rewards[t - 1]
        states.append(make_state(t, preds, score))
    buf = EpisodeBuffer(episode_id, "synthetic", 0)
    for t in range(T):
        buf.append(Experience(states[t], TextAction(f"a{t}"), float(rewards[t]), states[t + 1],
                              t == T - 1, tags[t], None, modes[t]))
    return buf.finalize()


def make_instance(add=(), delete=(), end=None, reward=0.0, iteration=0, tid="tr", t0=0, t1=1,
                  start=None, intentions=("do the thing",), actions=("act",)) -> SkillInstance:
    add, delete = frozenset(add), frozenset(delete)
    end = frozenset(end) if end is not None else add
    start = frozenset(start) if start is not None else delete
    return SkillInstance(tid, t0, t1, add, delete, reward, iteration, start, end, intentions,
                         actions)


def consensus_instances():
    """28 instances: target effects in 26, a spurious add in 5."""
    insts = []
    for i in range(28):
        add = {"border_info(IT)", "border_info(RU)"} if i < 26 else {"gal_status_known"}
        if i >= 23:
            add = add | {"russia_in_GAL"}
        delete = {"unk_intent(IT)"} if i < 26 else set()
        insts.append(make_instance(add, delete, tid=f"t{i}"))
    return insts


def make_skill(sid, add=(), delete=(), n=0, summary=None, pre=(), status="active", quality=0.0,
               plan=("act",), success=(), abort=(), category="misc", version=1,
               pass_rate=1.0, iteration=0) -> Skill:
    insts = [make_instance(add, delete, tid=f"{sid}-{i}", iteration=iteration) for i in range(n)]
    contract = EffectContract(frozenset(add), frozenset(delete), version, pass_rate, n)
    return Skill(sid, category, SkillProtocol(summary or f"skill {sid}", frozenset(pre), plan,
                                              frozenset(success), frozenset(abort)),
                 contract, insts, quality, status, iteration, iteration)


# --- independent oracles ---------------------------------------------------------

def oracle_row_left(row):
    """Independent single-row 2048 merge: walk tiles, merging each pair once."""
    out, score, pending = [], 0, None
    for v in row:
        if v == 0:
            continue
        if pending is None:
            pending = v
        elif pending == v:
            out.append(2 * v)
            score += 2 * v
            pending = None
        else:
            out.append(pending)
            pending = v
    if pending is not None:
        out.append(pending)
    return out + [0] * (len(row) - len(out)), score


def oracle_move(board, direction):
    b = [list(map(int, r)) for r in board]
    n = len(b)
    total = 0
    new = [[0] * n for _ in range(n)]
    for i in range(n):
        if direction in ("left", "right"):
            line = b[i] if direction == "left" else b[i][::-1]
        else:
            col = [b[r][i] for r in range(n)]
            line = col if direction == "up" else col[::-1]
        merged, s = oracle_row_left(line)
        total += s
        if direction in ("right", "down"):
            merged = merged[::-1]
        for j in range(n):
            if direction in ("left", "right"):
                new[i][j] = merged[j]
            else:
                new[j][i] = merged[j]
    return new, total


def brute_tetris_stats(board):
    h, w = board.shape
    height = holes = 0
    for c in range(w):
        seen = False
        for r in range(h):
            if board[r, c]:
                if not seen:
                    height = max(height, h - r)
                seen = True
            elif seen:
                holes += 1
    return height, holes


def brute_segmentation(traj, cuts, bank, delta_new=0.30, tau_match=0.35):
    """Best length-weighted tiling by enumerating every subset of cuts.

    Segment values are recomputed from raw predicate sets, without the
    decoder's scorer, and summed exactly. Returns (objective, bounds) under the same tie-break.
    """
    from fractions import Fraction
    from itertools import combinations
    from math import log1p

    T = len(traj.experiences)
    states = [e.o.predicates for e in traj.experiences] + [traj.experiences[-1].o_next.predicates]
    skills = [s for s in bank.skills.values() if s.status == "active"]
    top = max((len(s.instances) for s in skills), default=0)

    def value(a, b):
        start, end = states[a], states[b]
        eff = {"+" + p for p in end - start} | {"-" + p for p in start - end}
        best = None
        for s in skills:
            con = {"+" + p for p in s.contract.add} | {"-" + p for p in s.contract.delete}
            union = eff | con
            jac = len(eff & con) / len(union) if union else 1.0
            bonus = log1p(len(s.instances)) / log1p(top) if top > 0 else 0.0
            score = 0.9 * jac + 0.1 * bonus
            best = score if best is None else max(best, score)
        if best is None or best < tau_match:
            best = delta_new
        return (b - a) / T * best

    inner = sorted({c for c in cuts if 0 < c < T})
    result = None
    for k in range(len(inner) + 1):
        for chosen in combinations(inner, k):
            bounds = (0,) + chosen + (T,)
            total = sum((Fraction(value(a, b)) for a, b in zip(bounds, bounds[1:])),
                        Fraction(0))
            key = (total, -len(bounds), tuple(-x for x in bounds))
            if result is None or key > result[0]:
                result = (key, bounds)
    return float(result[0][0]), list(result[1])


def make_segment(label, add=(), delete=(), end=None, t0=0, t1=2, tid="tr", reward=1.0,
                 intentions=("negotiate with italy",), actions=("propose peace",)):
    from skillcoevo.discovery import LabeledSegment

    add, delete = frozenset(add), frozenset(delete)
    end = frozenset(end) if end is not None else add
    return LabeledSegment(tid, t0, t1, label, 0.0 if label == "NEW" else 0.9, add, delete,
                          reward, start_predicates=delete, end_predicates=end,
                          intentions=tuple(intentions), actions=tuple(actions))


PRED_POOL = ("a", "b", "c", "d", "e", "f", "g")


def _random_effects(rng):
    # a few prototype signatures with noise, so groups and merges actually occur
    protos = [({"a", "b"}, {"c"}), ({"d"}, {"e"}), ({"f", "g"}, set()), ({"a"}, {"d"})]
    add, delete = (set(x) for x in protos[rng.integers(len(protos))])
    if rng.random() < 0.3:
        add.add(PRED_POOL[rng.integers(len(PRED_POOL))])
    if rng.random() < 0.2 and add:
        add.discard(sorted(add)[0])
    delete -= add
    end = set(add)
    if rng.random() < 0.2 and end:
        end.discard(sorted(end)[-1])
    return add, delete, end


def random_maintenance_case(rng, rounds=None):
    """A seed bank plus per-round segment batches; labels are drawn lazily per round."""
    bank_skills = []
    for i in range(rng.integers(0, 4)):
        add, delete, _ = _random_effects(rng)
        skill = make_skill(f"seed{i}", add, delete, pass_rate=float(rng.random()))
        # some seed skills mix two behaviours so splits can trigger
        for k in range(int(rng.integers(0, 16))):
            a, d, e = _random_effects(rng) if rng.random() < 0.5 else (add, delete, add)
            skill.instances.append(make_instance(a, d, e, tid=f"seed{i}-{k}"))
        bank_skills.append(skill)
    n_rounds = int(rng.integers(1, 7)) if rounds is None else rounds
    batches = []
    for _ in range(n_rounds):
        batch = []
        size = 0 if rng.random() < 0.3 else int(rng.integers(0, 30))
        for j in range(size):
            add, delete, end = _random_effects(rng)
            batch.append((float(rng.random()), int(rng.integers(1 << 30)), add, delete, end,
                          float(rng.normal())))
        batches.append(batch)
    return bank_skills, batches


def run_maintenance_case(bank_skills, batches, params, check):
    """Apply each batch with maintain_bank, calling check(before, after, mutations)."""
    from skillcoevo.bank import Bank
    from skillcoevo.discovery import maintain_bank

    bank = Bank()
    for s in bank_skills:
        bank.upsert(s)
    for batch in batches:
        active = [s.id for s in bank.active_skills()]
        segs = []
        for k, (p_new, pick, add, delete, end, reward) in enumerate(batch):
            label = "NEW" if not active or p_new < 0.5 else active[pick % len(active)]
            segs.append(make_segment(label, add, delete, end, t0=k, t1=k + 1,
                                     tid=f"v{bank.version}", reward=reward))
        new, mutations = maintain_bank(bank, segs, params)
        check(bank, new, mutations)
        bank = new
    return bank


def check_maintenance_invariants(before, after, mutations, params):
    from skillcoevo.bank import jaccard, query_candidates
    from skillcoevo.metrics import evolution_point

    assert after.version == before.version + 1
    active = after.active_skills()
    for i, a in enumerate(active):
        for b in active[i + 1:]:
            assert jaccard(a.contract.effects, b.contract.effects) < params.theta_merge
    dead = {s.id for s in after.skills.values() if s.status != "active"}
    for preds in (set(), set(PRED_POOL)):
        ids = {s.id for s, _ in query_candidates(after, preds, "negotiate", k=64)}
        assert not ids & dead
    point = evolution_point(after)
    assert point.active == point.discovered - point.removed == len(active)
    for m in mutations:
        if m.kind == "materialize" and m.approved:
            assert m.payload["evidence"]["n_instances"] >= params.n_mat
            assert len(after.get(m.payload["skill_id"]).instances) >= params.n_mat
    for sid, old in before.skills.items():
        if old.status != "active" and sid in after.skills:
            assert after.skills[sid].status != "active"


GAME_SKILLS = {
    "g2048": [
        ("corner", {"max_tile_ge_128"}, {"empty_le_2"}, ("left", "down"), {"empty_ge_4"},
         "grow the corner tile"),
        ("space", {"empty_ge_8"}, set(), ("up", "left"), {"empty_ge_2"}, "free space by merging"),
    ],
    "candycrush": [
        ("cascade", {"best_swap_clear_ge_5"}, set(), ("swap row 3", "swap"),
         {"valid_swaps_ge_3"}, "clear candies and set up cascades"),
        ("rush", {"moves_left_le_10"}, {"valid_swaps_ge_10"}, ("swap",), set(),
         "clear candies before moves run out"),
    ],
    "tetris": [
        ("flat", {"lines_ge_1"}, {"holes_gt_5"}, ("place col 0", "place col 9"),
         {"height_le_8"}, "stack flat and clear lines"),
        ("dig", {"holes_le_2"}, {"danger_height_ge_15"}, ("place rot 1",), {"holes_le_5"},
         "dig out holes"),
    ],
}


def game_bank(game):
    """A hand-written bank over the game's real predicates, for agent tests."""
    from skillcoevo.bank import Bank

    bank = Bank()
    for name, add, abort, plan, pre, summary in GAME_SKILLS[game]:
        skill = make_skill(f"{game}_{name}", add, pre=pre, summary=summary, plan=plan,
                           success=add, abort=abort, category=name, n=4)
        bank.upsert(skill)
    return bank


# --- run directories -------------------------------------------------------------

def tree_digest(root) -> dict[str, str]:
    """Relative path -> sha256 for every file under ``root``."""
    root = Path(root)
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
