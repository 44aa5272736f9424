import math

import pytest
from hypothesis import given, strategies as st

from skillcoevo.bank import Bank, BankMutation, EffectContract
from skillcoevo.discovery import infer_segmentation, propose_boundaries
from skillcoevo.envs import ConfigError
from skillcoevo.rewards import (RewardParams, SkillEpisodeStats, action_reward, contract_reward,
                                curator_reward, f1, follow_shaping, retrieval_reward,
                                segmentation_reward, skill_episode_stats)

from helpers import make_instance, make_skill, make_traj

C = EffectContract({"a", "b"}, {"x"})


# --- shaping ------------------------------------------------------------------

def test_no_new_satisfaction_costs_002():
    r, sat = follow_shaping(C, {"x"}, {"x"})
    assert r == -0.02 and sat == frozenset()


def test_one_new_add_gives_01():
    r, sat = follow_shaping(C, {"x"}, {"x", "a"})
    assert r == pytest.approx(0.1) and sat == {"+a"}


def test_final_effect_gives_completion_bonus():
    r, sat = follow_shaping(C, {"a", "b", "x"}, {"a", "b"}, already_satisfied={"+a", "+b"})
    assert r == pytest.approx(0.6, abs=1e-12) and sat == C.effects


def test_bonus_paid_once_per_effect():
    r, _ = follow_shaping(C, set(), {"a"}, already_satisfied={"+a"})
    assert r == -0.02


# --- action reward ------------------------------------------------------------

def test_action_reward_examples():
    assert action_reward(4, 0, False) == 4.0
    assert action_reward(0, 0.6, False) == pytest.approx(0.06, abs=1e-12)
    assert action_reward(0, 0, True) == -0.05


@given(st.floats(-1e6, 1e6, allow_nan=False), st.floats(0, 10))
def test_action_reward_identity(r_env, lam):
    assert action_reward(r_env, 0.0, False, RewardParams(lambda_f=lam)) == r_env


@pytest.mark.parametrize("lam", [0.0, 0.1, 1.0])
def test_action_reward_slope(lam):
    p = RewardParams(lambda_f=lam)
    ys = [action_reward(2.0, x, False, p) for x in (0.0, 1.0, 3.0)]
    assert ys[1] - ys[0] == pytest.approx(lam, abs=1e-12)
    assert (ys[2] - ys[0]) / 3 == pytest.approx(lam, abs=1e-12)


def test_reward_params_validation():
    with pytest.raises(ConfigError):
        RewardParams(lambda_f=-0.1)
    with pytest.raises(ConfigError):
        RewardParams(w_env=0.5)


# --- retrieval ----------------------------------------------------------------

def stats(norm=0.0, duration=10, horizon=10, completion=0.0, aborted=False, conf=0.0):
    return SkillEpisodeStats(0.0, norm, duration, horizon, completion, aborted, conf)


def test_retrieval_examples():
    assert retrieval_reward(stats(1.0, 0, 10, 1.0, False, 1.0)) == pytest.approx(0.85, abs=1e-12)
    assert retrieval_reward(stats(aborted=True)) == pytest.approx(-0.15, abs=1e-12)
    assert retrieval_reward(stats()) == 0.0


@given(st.floats(0, 1), st.integers(1, 50), st.floats(0, 1), st.booleans(), st.floats(0, 1),
       st.data())
def test_retrieval_bounds(norm, horizon, completion, aborted, conf, data):
    duration = data.draw(st.integers(0, horizon))
    r = retrieval_reward(stats(norm, duration, horizon, completion, aborted, conf))
    assert -0.15 - 1e-12 <= r <= 1.0


def test_stats_validation():
    with pytest.raises(ValueError):
        stats(duration=11, horizon=10)
    with pytest.raises(ValueError):
        stats(norm=1.5)


def test_skill_episode_stats_from_agent_run():
    from skillcoevo.agent import run_episode
    from skillcoevo.envs import EnvConfig
    from helpers import game_bank

    traj = run_episode(EnvConfig("g2048", seed=0, max_steps=60), game_bank("g2048"))
    runs = skill_episode_stats([traj])
    switches = sum(e.mode == "skill_selection" for e in traj.experiences)
    assert len(runs) == switches
    for s in runs:
        assert 0 <= s.duration <= s.horizon
        assert -0.15 - 1e-12 <= retrieval_reward(s) <= 1.0


# --- segmentation -------------------------------------------------------------

def test_all_new_on_zero_reward_takes_coverage_1():
    traj = make_traj([set(), {"a"}, {"b"}, {"c"}])
    segs = infer_segmentation(traj, [], Bank())
    out = segmentation_reward(traj, segs, Bank())
    assert out["coverage"] == 1.0
    assert 0.0 <= out["total"] <= 1.0


def test_all_positive_reward_in_matched_segments():
    traj = make_traj([set(), {"a"}, {"a", "b"}], rewards=[3.0, 1.0])
    bank = Bank().upsert(make_skill("ab", {"a", "b"}, n=3))
    segs = infer_segmentation(traj, [], bank)
    assert [s.label for s in segs] == ["ab"]
    out = segmentation_reward(traj, segs, bank)
    assert 0.4 * out["coverage"] == pytest.approx(0.4)
    assert out["margin"] == 1.0  # no competitor


def test_new_segments_get_partial_credit():
    traj = make_traj([set(), {"a"}, {"q"}], rewards=[1.0, 1.0])
    bank = Bank().upsert(make_skill("a", {"a"}, n=2))
    segs = infer_segmentation(traj, [1], bank)
    assert [s.label for s in segs] == ["a", "NEW"]
    assert segmentation_reward(traj, segs, bank)["coverage"] == pytest.approx((1 + 0.15) / 2)


def test_segmentation_reward_on_fixture(demo_traj, demo_bank):
    segs = infer_segmentation(demo_traj, propose_boundaries(demo_traj), demo_bank)
    out = segmentation_reward(demo_traj, segs, demo_bank)
    assert 0.0 <= out["total"] <= 1.0
    with pytest.raises(ValueError):
        segmentation_reward(demo_traj, segs[1:], demo_bank)


# --- contracts ----------------------------------------------------------------

def test_f1_examples():
    assert f1({"a", "b", "c"}, {"a", "b", "d"}) == pytest.approx(2 / 3)
    assert f1(set(), set()) == 1.0
    assert f1({"a"}, {"b"}) == 0.0


def test_contract_reward_identity_and_disjoint():
    insts = [make_instance({"a"}, {"x"}, tid=str(i)) for i in range(4)]
    same = contract_reward(EffectContract({"a"}, {"x"}), insts)
    assert 0.6 * same["f1"] == pytest.approx(0.6)
    off = contract_reward(EffectContract({"zz"}, set()), insts)
    assert off["f1"] == 0.0
    with pytest.raises(ValueError):
        contract_reward(C, [])


def test_contract_reward_with_holdout():
    train = [make_instance({"a"}, tid=str(i)) for i in range(4)]
    hold = [make_instance({"a"}, reward=5.0, tid="h1"), make_instance({"b"}, reward=0.0, tid="h2")]
    out = contract_reward(EffectContract({"a"}, set()), train, hold)
    assert out["weighted_pass"] == pytest.approx((5 + 1e-6) / (5 + 2e-6), abs=1e-12)
    assert out["reward_alignment"] == 1.0 and out["f1"] == 1.0


# --- curator ------------------------------------------------------------------

def test_curator_examples():
    m = BankMutation("materialize", {}, True, "group g0001: 12 instances (N_mat=10), rate 1.000")
    ev = {"n_instances": 12, "pre_quality": 0.0, "post_quality": 0.6}
    assert curator_reward(m, ev)["total"] == pytest.approx(1.0)
    m = BankMutation("refine", {}, False, "pass 0.5 -> 0.9")
    out = curator_reward(m, {"pre_quality": 0.3, "post_quality": 0.5})
    assert out["quality_alignment"] == -1.0
    m = BankMutation("retire", {}, True, "")
    assert curator_reward(m, {"pre_quality": 0.2, "post_quality": 0.2})["reason_quality"] == 0.0


@given(st.sampled_from(["refine", "materialize", "merge", "split", "retire"]), st.booleans(),
       st.floats(0, 1), st.floats(0, 1), st.integers(0, 30), st.text(max_size=30))
def test_curator_bounds(kind, approved, pre, post, n, reason):
    out = curator_reward(BankMutation(kind, {}, approved, reason),
                         {"pre_quality": pre, "post_quality": post, "n_instances": n})
    assert -0.5 <= out["total"] <= 1.0 and math.isfinite(out["total"])
