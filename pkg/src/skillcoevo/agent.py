"""Skill-augmented decision loop: pick a skill, update the intention, act.

Each of the three decisions (which skill, which intention, which action) has
a heuristic backend and an optional oracle backend.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .bank import Bank, Skill, query_candidates, tokens
from .envs import (Action, ConfigError, Direction, EnvConfig, Observation, Placement,
                   SelectSkill, Swap, create_env)
from .envs import candycrush, g2048, tetris
from .oracle import OracleClient, OracleSettings
from .rewards import RewardParams, action_reward, follow_shaping
from .trajectory import EpisodeBuffer, Experience, State, Trajectory, normalize_tag

log = logging.getLogger(__name__)

BACKENDS = ("heuristic", "oracle")


class EpisodeError(RuntimeError):
    """An env or policy failure, tagged with the episode and step it happened at."""

    def __init__(self, episode_id: str, step: int, cause: Exception):
        super().__init__(f"episode {episode_id} step {step}: {type(cause).__name__}: {cause}")
        self.episode_id = episode_id
        self.step = step


# 2048 tie-break priority
DIRECTION_PRIORITY = ("left", "down", "right", "up")


@dataclass(frozen=True)
class PolicyConfig:
    """Backend choice and knobs for the three decisions.

    ``oracle`` holds the endpoint reference; it is only consulted when
    ``backend == "oracle"``.
    """

    backend: str = "heuristic"
    retrieval_k: int = 3
    tau_match: float = 0.35
    no_progress_limit: int = 5
    intention_streak_limit: int = 2
    history_window: int = 5
    skill_bias: float = 0.5
    tetris_hole_weight: float = 10.0
    oracle: OracleSettings | None = None

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ConfigError(f"policy backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.retrieval_k < 1 or self.no_progress_limit < 1 or self.intention_streak_limit < 1:
            raise ConfigError("retrieval_k, no_progress_limit and intention_streak_limit must be >= 1")
        if self.history_window < 1:
            raise ConfigError("history_window must be >= 1")


@dataclass
class ActiveSkill:
    skill_id: str
    entry_step: int
    cursor: int = 0
    satisfied: frozenset[str] = frozenset()


@dataclass
class AgentState:
    intention: str = ""
    active: ActiveSkill | None = None
    no_progress_steps: int = 0
    intention_change_streak: int = 0
    history: deque = field(default_factory=lambda: deque(maxlen=5))


@dataclass(frozen=True)
class SkillDecision:
    variant: str  # continue | switch_to | bare
    skill_id: str | None = None
    score: float = 0.0
    trigger: str | None = None

    @classmethod
    def keep(cls) -> "SkillDecision":
        return cls("continue")


def _preds(obs) -> frozenset[str]:
    if isinstance(obs, State):
        return obs.predicates
    if isinstance(obs, Observation):
        return State.from_observation(obs).predicates
    return frozenset(obs)


# --- pi^skill --------------------------------------------------------------

def switch_trigger(agent: AgentState, skill: Skill | None, preds: frozenset[str],
                   policy: PolicyConfig = PolicyConfig()) -> str | None:
    """Name of the first trigger that ends the active skill, or None."""
    if skill is None or skill.status != "active":
        return "unavailable"
    proto = skill.protocol
    if proto.success and proto.success <= preds:
        return "success"
    if proto.abort & preds:
        return "abort"
    if agent.no_progress_steps >= policy.no_progress_limit:
        return "no_progress"
    if agent.intention_change_streak >= policy.intention_streak_limit:
        return "intention_shift"
    return None


def decide_skill(agent: AgentState, obs, bank: Bank,
                 policy: PolicyConfig = PolicyConfig()) -> SkillDecision:
    preds = _preds(obs)
    trigger = None
    if agent.active is not None:
        trigger = switch_trigger(agent, bank.skills.get(agent.active.skill_id), preds, policy)
        if trigger is None:
            return SkillDecision.keep()
    exclude = [agent.active.skill_id] if agent.active is not None else []
    ranked = query_candidates(bank, preds, agent.intention, k=policy.retrieval_k, exclude=exclude)
    if ranked and ranked[0][1] >= policy.tau_match:
        return SkillDecision("switch_to", ranked[0][0].id, ranked[0][1], trigger)
    return SkillDecision("bare", trigger=trigger)


# --- pi^int ----------------------------------------------------------------

def _first(preds: frozenset[str], prefix: str) -> str | None:
    hits = sorted(p for p in preds if p.startswith(prefix))
    return hits[0] if hits else None


def bare_goal(game_id: str, preds: frozenset[str]) -> str:
    """Heuristic per-game subgoal when no skill is active."""
    if game_id == "g2048":
        if "empty_le_2" in preds:
            return "free space by merging tiles"
        if "max_in_corner" not in preds:
            return "move the max tile into a corner"
        tile = _first(preds, "max_tile=")
        return f"grow {tile} in the corner" if tile else "grow the corner tile"
    if game_id == "candycrush":
        if "best_swap_clear_ge_4" in preds:
            return "take the big clear"
        if "moves_left_le_10" in preds:
            return "clear candies before moves run out"
        return "clear candies and set up cascades"
    if game_id == "tetris":
        if "danger_height_ge_15" in preds:
            return "lower the stack"
        if "holes_gt_5" in preds:
            return "dig out holes"
        if "well_open" in preds and "i_piece_in_preview" in preds:
            return "keep the well for the i piece"
        return "stack flat and clear lines"
    return "make progress"


def skilled_tag(skill: Skill, cursor: int) -> str:
    gist = skill.protocol.plan[min(cursor, len(skill.protocol.plan) - 1)]
    effects = sorted(skill.contract.effects)
    target = effects[0][1:] if effects else skill.category
    return normalize_tag(f"{gist} @ {target}")


def update_intention(agent: AgentState, obs, skill: Skill | None, game_id: str = "",
                     policy: PolicyConfig = PolicyConfig(), oracle: OracleClient | None = None) -> str:
    """Set and return the new intention tag; track consecutive changes."""
    preds = _preds(obs)
    if skill is not None and agent.active is not None:
        tag = skilled_tag(skill, agent.active.cursor)
    else:
        tag = normalize_tag(bare_goal(game_id, preds))
    if policy.backend == "oracle" and oracle is not None:
        ctx = {"game": game_id, "predicates": sorted(preds),
               "skill": skill.protocol.summary if skill is not None else None,
               "previous": agent.intention}
        tag = normalize_tag(oracle.intention(ctx, tag)) or tag
    if agent.intention and tag != agent.intention:
        agent.intention_change_streak += 1
    else:
        agent.intention_change_streak = 0
    agent.intention = tag
    return tag


# --- pi^act ----------------------------------------------------------------

def heuristic_scores(game_id: str, payload: dict[str, Any], valid: Sequence[Action],
                     policy: PolicyConfig = PolicyConfig()) -> list[float]:
    """Higher is better; ties are resolved by the caller's ordering."""
    if game_id == "g2048":
        board = np.array(payload["board"], dtype=np.int64)
        out = []
        for a in valid:
            new, reward, _ = g2048.apply_move(board, a.direction)
            out.append(float(reward + np.count_nonzero(new == 0)))
        return out
    if game_id == "candycrush":
        board = np.array(payload["board"], dtype=np.int64)
        return [float(candycrush.swap_clear_count(board, a)) for a in valid]
    if game_id == "tetris":
        board = np.array(payload["board"], dtype=np.int8)
        out = []
        for a in valid:
            new, _ = tetris.place(board, payload["current"], a.rotation, a.column)
            stats = tetris.board_stats(new)
            out.append(-(stats["holes"] * policy.tetris_hole_weight + stats["height"]))
        return out
    return [0.0] * len(valid)


def _tie_key(a: Action) -> tuple:
    if isinstance(a, Direction):
        return (DIRECTION_PRIORITY.index(a.direction),)
    if isinstance(a, Placement):
        return (a.column, a.rotation)
    if isinstance(a, Swap):
        return (a.r1, a.c1, a.r2, a.c2)
    return (a.describe(),)


def select_action(agent: AgentState, obs, valid: Sequence[Action], skill: Skill | None = None,
                  game_id: str = "", policy: PolicyConfig = PolicyConfig(),
                  oracle: OracleClient | None = None) -> Action:
    if not valid:
        raise ValueError("select_action needs at least one valid action")
    if len(valid) == 1:
        return valid[0]
    payload = obs.payload if isinstance(obs, (State, Observation)) else {}
    scores = heuristic_scores(game_id, payload, valid, policy)
    if skill is not None and agent.active is not None:
        step = skill.protocol.plan[min(agent.active.cursor, len(skill.protocol.plan) - 1)]
        hint = tokens(step)
        scores = [s + (policy.skill_bias if hint and tokens(a.describe()) & hint else 0.0)
                  for s, a in zip(scores, valid)]
    best = min(range(len(valid)), key=lambda i: (-scores[i], _tie_key(valid[i])))
    if policy.backend == "oracle" and oracle is not None:
        summary = obs.summary if isinstance(obs, State) else getattr(obs, "text_summary", "")
        ctx = {"game": game_id, "summary": summary, "intention": agent.intention,
               "plan": list(skill.protocol.plan) if skill is not None else [],
               "history": [list(h) for h in agent.history]}
        best = oracle.action(ctx, [a.describe() for a in valid], best)
    return valid[best]


# --- episode loop ----------------------------------------------------------

def _oracle_for(policy: PolicyConfig, oracle: OracleClient | None) -> OracleClient | None:
    if policy.backend != "oracle":
        return None
    if oracle is not None:
        return oracle
    return OracleClient.from_settings(policy.oracle or OracleSettings.from_env())


def episode_id(env_config: EnvConfig, iteration: int) -> str:
    return f"{env_config.game_id}-u{iteration:03d}-s{env_config.seed}"


def run_episode(env_config: EnvConfig, bank: Bank, policy: PolicyConfig = PolicyConfig(),
                reward_params: RewardParams | None = None, iteration: int = 0,
                oracle: OracleClient | None = None) -> Trajectory:
    """Play one episode against a read-only bank snapshot."""
    params = reward_params or RewardParams()
    oracle = _oracle_for(policy, oracle)
    env, obs = create_env(env_config)
    game = env_config.game_id
    eid = episode_id(env_config, iteration)
    buf = EpisodeBuffer(eid, game, env_config.seed, iteration, env_config.max_steps)
    agent = AgentState(history=deque(maxlen=policy.history_window))
    state = State.from_observation(obs)
    t = 0
    try:
        while True:
            decision = decide_skill(agent, state, bank, policy)
            switched = decision.variant == "switch_to"
            if switched:
                agent.active = ActiveSkill(decision.skill_id, t)
                agent.no_progress_steps = 0
                agent.intention_change_streak = 0
            elif decision.variant == "bare":
                agent.active = None
            skill = bank.skills[agent.active.skill_id] if agent.active is not None else None
            z = update_intention(agent, state, skill, game, policy, oracle)
            if switched:
                info = {"r_env": 0.0, "r_t": action_reward(0.0, 0.0, True, params),
                        "retrieval_score": decision.score, "trigger": decision.trigger}
                buf.append(Experience(state, SelectSkill(decision.skill_id), 0.0, state, False, z,
                                      decision.skill_id, "skill_selection", info))
            action = select_action(agent, state, env.valid_actions(), skill, game, policy, oracle)
            result = env.step(action)
            nxt = State.from_observation(result.next_obs)
            info: dict[str, Any] = {"r_env": result.reward, **result.info}
            r_follow = 0.0
            if skill is not None:
                r_follow, satisfied = follow_shaping(skill.contract, state.predicates,
                                                     nxt.predicates, agent.active.satisfied, params)
                progressed = satisfied != agent.active.satisfied
                agent.active.satisfied = satisfied
                agent.no_progress_steps = 0 if progressed else agent.no_progress_steps + 1
                if progressed:
                    agent.active.cursor = min(agent.active.cursor + 1,
                                              len(skill.protocol.plan) - 1)
                n_eff = len(skill.contract.effects)
                info["contract_progress"] = len(satisfied) / n_eff if n_eff else 1.0
            else:
                agent.no_progress_steps = 0
            if decision.trigger is not None and not switched:
                info["trigger"] = decision.trigger
            info["r_follow"] = r_follow
            info["r_t"] = action_reward(result.reward, r_follow, False, params)
            buf.append(Experience(state, action, result.reward, nxt, result.done, z,
                                  agent.active.skill_id if agent.active else None,
                                  "primitive_action", info))
            agent.history.append((state.summary, action.describe(), result.reward))
            state = nxt
            t += 1
            if result.done:
                break
    except Exception as err:
        raise EpisodeError(eid, t, err) from err
    return buf.finalize()


__all__ = [
    "ActiveSkill", "AgentState", "EpisodeError", "PolicyConfig", "SkillDecision", "bare_goal", "decide_skill",
    "episode_id", "heuristic_scores", "run_episode", "select_action", "skilled_tag",
    "switch_trigger", "update_intention",
]
