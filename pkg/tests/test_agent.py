from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skillcoevo.agent import (ActiveSkill, AgentState, EpisodeError, PolicyConfig, decide_skill,
                              run_episode, select_action, switch_trigger, update_intention)
from skillcoevo.bank import Bank
from skillcoevo.envs import ConfigError, Direction, EnvConfig, create_env, tetris
from skillcoevo.envs import g2048

from helpers import game_bank, make_skill


def test_empty_bank_no_active_skill_is_bare():
    d = decide_skill(AgentState(), frozenset({"p"}), Bank())
    assert d.variant == "bare" and d.skill_id is None


def test_abort_predicate_forces_switch(demo_bank):
    agent = AgentState(intention="observe", active=ActiveSkill("EXPLORE", 0))
    preds = frozenset({"game_start", "home_centers_attacked"})
    assert switch_trigger(agent, demo_bank.get("EXPLORE"), preds) == "abort"
    d = decide_skill(agent, preds, demo_bank)
    assert d.variant != "continue" and d.trigger == "abort"
    assert d.skill_id != "EXPLORE"


def test_mid_plan_with_progress_continues(demo_bank):
    agent = AgentState(intention="assess", active=ActiveSkill("EXPLORE", 0, cursor=1),
                       no_progress_steps=0, intention_change_streak=1)
    assert decide_skill(agent, frozenset({"border_info(IT)"}), demo_bank).variant == "continue"


@pytest.mark.parametrize("agent_kw, trigger", [
    ({"no_progress_steps": 5}, "no_progress"),
    ({"intention_change_streak": 2}, "intention_shift"),
])
def test_other_triggers(demo_bank, agent_kw, trigger):
    agent = AgentState(active=ActiveSkill("EXPLORE", 0), **agent_kw)
    assert switch_trigger(agent, demo_bank.get("EXPLORE"), frozenset()) == trigger


def test_success_trigger(demo_bank):
    done = frozenset({"border_info(IT)", "border_info(RU)", "gal_status_known"})
    agent = AgentState(active=ActiveSkill("EXPLORE", 0))
    assert switch_trigger(agent, demo_bank.get("EXPLORE"), done) == "success"


def test_switch_only_names_active_skills(demo_bank):
    demo_bank.get("SETUP").status = "retired"
    for preds in (frozenset(), frozenset({"game_start"}), frozenset({"serbia_open"})):
        d = decide_skill(AgentState(intention="take serbia"), preds, demo_bank)
        if d.variant == "switch_to":
            assert demo_bank.get(d.skill_id).status == "active"
            assert d.score >= PolicyConfig().tau_match


def test_intention_is_deterministic_and_tracks_streak(demo_bank):
    skill = demo_bank.get("EXPLORE")
    a, b = AgentState(active=ActiveSkill("EXPLORE", 0)), AgentState(active=ActiveSkill("EXPLORE", 0))
    obs = frozenset({"game_start"})
    assert update_intention(a, obs, skill) == update_intention(b, obs, skill)
    assert "observe" in a.intention.split()
    assert a.intention_change_streak == 0
    a.active.cursor = 1
    update_intention(a, obs, skill)
    a.active.cursor = 2
    update_intention(a, obs, skill)
    assert a.intention_change_streak == 2
    assert switch_trigger(a, skill, obs) == "intention_shift"
    update_intention(a, obs, skill)
    assert a.intention_change_streak == 0


def test_tags_are_short():
    agent = AgentState()
    for preds in ({"empty_le_2"}, {"max_in_corner", "max_tile=64"}, set()):
        tag = update_intention(agent, frozenset(preds), None, "g2048")
        assert 1 <= len(tag.split()) <= 12


def test_single_valid_action_returned():
    only = Direction("up")
    assert select_action(AgentState(), None, [only], game_id="g2048") is only
    with pytest.raises(ValueError):
        select_action(AgentState(), None, [], game_id="g2048")


def test_2048_prefers_the_merging_move():
    # a horizontal pair merges the same total either way, so right cannot score 0
    # while left scores 8; up and down merge nothing and left wins the tie on priority
    board = [[4, 4, 2, 8], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]
    merges = {d: g2048.apply_move(np.array(board), d)[1] for d in ("left", "right", "up", "down")}
    assert merges == {"left": 8, "right": 8, "up": 0, "down": 0}
    env = g2048.G2048Env.from_board(board)
    picked = select_action(AgentState(), env.observation(), env.valid_actions(), game_id="g2048")
    assert picked == Direction("left")


def test_2048_merge_beats_priority():
    # only vertical moves merge; up and down tie and down wins on priority
    board = [[8, 0, 0, 0], [8, 0, 0, 0], [2, 0, 0, 0], [4, 0, 0, 0]]
    merges = {d: g2048.apply_move(np.array(board), d)[1] for d in ("left", "right", "up", "down")}
    assert merges["left"] == 0 and merges["up"] == 16 and merges["down"] == 16
    env = g2048.G2048Env.from_board(board)
    picked = select_action(AgentState(), env.observation(), env.valid_actions(), game_id="g2048")
    assert picked == Direction("down")


def test_tetris_tie_takes_lowest_column_both_runs():
    env, obs = create_env(EnvConfig("tetris", seed=0))
    valid = env.valid_actions()
    picks = {select_action(AgentState(), obs, valid, game_id="tetris") for _ in range(2)}
    (pick,) = picks
    board = np.array(obs.payload["board"], dtype=np.int8)
    piece = obs.payload["current"]

    def cost(p):
        new, _ = tetris.place(board, piece, p.rotation, p.column)
        s = tetris.board_stats(new)
        return s["holes"] * 10 + s["height"]
    best = min(cost(p) for p in valid)
    tied = [p for p in valid if cost(p) == best]
    assert len(tied) > 1
    assert pick == min(tied, key=lambda p: (p.column, p.rotation))


def test_skill_bias_steers_toward_plan_step():
    skill = make_skill("s", {"x"}, plan=("right",))
    agent = AgentState(active=ActiveSkill("s", 0))
    env = g2048.G2048Env.from_board([[2, 0, 0, 0], [0] * 4, [0] * 4, [0] * 4])
    obs = env.observation()
    assert select_action(AgentState(), obs, env.valid_actions(), game_id="g2048") != Direction("right")
    assert select_action(agent, obs, env.valid_actions(), skill, "g2048") == Direction("right")


def test_max_steps_one_gives_one_primitive_step():
    for bank in (Bank(), game_bank("tetris")):
        traj = run_episode(EnvConfig("tetris", seed=3, max_steps=1), bank)
        modes = [e.mode for e in traj.experiences]
        assert modes.count("primitive_action") == 1 and modes.count("skill_selection") <= 1


def test_empty_bank_never_switches():
    traj = run_episode(EnvConfig("g2048", seed=1), Bank())
    assert all(e.mode == "primitive_action" and e.active_skill is None for e in traj.experiences)


def test_seed_7_run_is_reproducible():
    bank = game_bank("g2048")
    assert run_episode(EnvConfig("g2048", seed=7), bank) == run_episode(EnvConfig("g2048", seed=7), bank)


def test_rewards_recorded_in_info():
    traj = run_episode(EnvConfig("g2048", seed=2, max_steps=30), game_bank("g2048"))
    for e in traj.experiences:
        assert e.info["r_env"] == e.r
        assert "r_t" in e.info
        if e.mode == "skill_selection":
            assert e.r == 0.0 and e.o == e.o_next


def test_bank_is_not_modified_by_play():
    bank = game_bank("candycrush")
    before = bank.to_dict()
    run_episode(EnvConfig("candycrush", seed=0, max_steps=20), bank)
    assert bank.to_dict() == before


def test_policy_config_validation():
    with pytest.raises(ConfigError):
        PolicyConfig(backend="gpt")
    with pytest.raises(ConfigError):
        PolicyConfig(retrieval_k=0)


def test_env_failure_carries_episode_context(monkeypatch):
    import skillcoevo.agent as agent_mod

    def boom(*args, **kwargs):
        raise RuntimeError("policy exploded")
    monkeypatch.setattr(agent_mod, "select_action", boom)
    with pytest.raises(EpisodeError) as info:
        run_episode(EnvConfig("g2048", seed=0), Bank())
    assert info.value.step == 0 and "g2048" in info.value.episode_id


def replay_check(game, seed, bank, max_steps=None):
    """Replay a trajectory, checking each primitive action was valid at its step.

    Returns the number of primitive steps checked.
    """
    cfg = EnvConfig(game, seed=seed, max_steps=max_steps)
    traj = run_episode(cfg, bank)
    env, obs = create_env(cfg)
    checked = 0
    last_switch_gap = None
    current = None
    for e in traj.experiences:
        if e.mode == "skill_selection":
            assert last_switch_gap != 0, "two switches without a primitive action between"
            assert bank.get(e.a.skill_id).status == "active"
            last_switch_gap = 0
            current = e.a.skill_id
            assert e.active_skill == current
            continue
        assert e.a in env.valid_actions()
        res = env.step(e.a)
        assert res.reward == e.r
        checked += 1
        if last_switch_gap is not None:
            last_switch_gap += 1
        if e.active_skill is not None:
            assert e.active_skill == current
        else:
            current = None
    assert env.done
    return checked


@pytest.mark.parametrize("game", ["g2048", "candycrush", "tetris"])
@settings(max_examples=8)
@given(seed=st.integers(0, 2**31))
def test_actions_valid_switches_disciplined(game, seed):
    for bank in (Bank(), game_bank(game)):
        replay_check(game, seed, bank, max_steps=40)


def test_game_banks_actually_switch():
    kinds = set()
    for game in ("g2048", "candycrush", "tetris"):
        traj = run_episode(EnvConfig(game, seed=0), game_bank(game))
        kinds |= {e.a.skill_id for e in traj.experiences if e.mode == "skill_selection"}
    assert len(kinds) >= 3


def test_history_window_bounded():
    agent = AgentState(history=deque(maxlen=5))
    for i in range(9):
        agent.history.append(("s", "a", float(i)))
    assert len(agent.history) == 5
