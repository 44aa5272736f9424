import json

import pytest

import skillcoevo.orchestrator as orch
from skillcoevo.bank import BankError, load_bank, save_bank
from skillcoevo.config import CoEvolutionConfig
from skillcoevo.envs import EnvConfig
from skillcoevo.orchestrator import (RunError, evaluate, latest_snapshot, run_coevolution,
                                     snapshot_iterations, summarize_rewards)

from helpers import file_digest, game_bank, tree_digest


def small(out, **kw):
    kw = {"total_steps": 4, "episodes_per_step": 2, "ckpt_interval": 2, "workers": 1, **kw}
    return CoEvolutionConfig(game=EnvConfig("g2048", seed=5, max_steps=40), output_dir=str(out), **kw)


def test_snapshot_schedule():
    assert snapshot_iterations(10, 3) == [3, 6, 9, 10]
    assert snapshot_iterations(7, 1) == list(range(1, 8))
    assert snapshot_iterations(1, 5) == [1]


def test_single_iteration_run(tmp_path):
    cfg = CoEvolutionConfig(EnvConfig("tetris", seed=0, max_steps=20), 1, 1, 1,
                            output_dir=str(tmp_path / "run"), workers=1)
    (art,) = run_coevolution(cfg)
    run = tmp_path / "run"
    assert art.iteration == 1 and art.bank_snapshot_path == "banks/bank_u001.json"
    assert load_bank(run / art.bank_snapshot_path).version == 1
    for rel in (art.trajectory_path, art.segments_path, art.mutations_path, art.report_path):
        assert (run / rel).is_file()
    report = json.loads((run / art.report_path).read_text())
    assert report["iteration"] == 1 and report["evolution"]["active"] >= 0
    assert (run / "config.ini").is_file() and (run / "evolution.csv").is_file()


def test_snapshot_versions_match_iterations(tmp_path):
    results = run_coevolution(small(tmp_path / "r"))
    snaps = [a for a in results if a.bank_snapshot_path]
    assert [a.iteration for a in snaps] == [2, 4]
    for a in snaps:
        assert load_bank(tmp_path / "r" / a.bank_snapshot_path).version == a.iteration


def test_existing_run_dir_refused(tmp_path):
    run_coevolution(small(tmp_path / "r", total_steps=1))
    with pytest.raises(RunError):
        run_coevolution(small(tmp_path / "r", total_steps=1))


def test_rerun_is_artifact_identical(tmp_path):
    run_coevolution(small(tmp_path / "a"))
    run_coevolution(small(tmp_path / "b"))
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_resume_equivalence(tmp_path):
    run_coevolution(small(tmp_path / "full"))
    run_coevolution(small(tmp_path / "part", total_steps=2))
    run_coevolution(small(tmp_path / "part"), resume=True)
    assert tree_digest(tmp_path / "full") == tree_digest(tmp_path / "part")


def test_interrupted_iteration_is_redone(tmp_path, monkeypatch):
    run_coevolution(small(tmp_path / "full"))
    real = orch._write_atomic

    def crash_on_last_report(path, text):
        if path.name == "report.json" and path.parent.name == "iter_004":
            raise OSError("disk gone")
        real(path, text)
    monkeypatch.setattr(orch, "_write_atomic", crash_on_last_report)
    with pytest.raises(OSError):
        run_coevolution(small(tmp_path / "part"))
    monkeypatch.setattr(orch, "_write_atomic", real)
    part = tmp_path / "part"
    # snapshot 4 was written but its iteration never completed
    assert (part / "banks" / "bank_u004.json").exists()
    assert latest_snapshot(part)[0] == 2
    run_coevolution(small(part), resume=True)
    assert tree_digest(tmp_path / "full") == tree_digest(part)


def test_resume_without_snapshot_starts_fresh(tmp_path):
    run_coevolution(small(tmp_path / "a", total_steps=1, ckpt_interval=5))
    run_coevolution(small(tmp_path / "b", total_steps=1, ckpt_interval=5), resume=True)
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_seed_bank_is_rebased(tmp_path):
    seed = game_bank("g2048")
    seed.version = 7
    save_bank(tmp_path / "seed.json", seed)
    results = run_coevolution(small(tmp_path / "r", total_steps=2, seed_bank=str(tmp_path / "seed.json")))
    assert load_bank(tmp_path / "r" / results[-1].bank_snapshot_path).version == 2


# --- evaluation -----------------------------------------------------------------

def test_evaluate_leaves_bank_file_untouched(tmp_path):
    path = tmp_path / "bank.json"
    save_bank(path, game_bank("g2048"))
    before = file_digest(path)
    s = evaluate(path, EnvConfig("g2048", max_steps=40), n_episodes=4)
    assert file_digest(path) == before
    assert s.n == 4 and s.seeds == (0, 1, 2, 3)


def test_single_rollout_has_na_interval():
    s = evaluate(None, EnvConfig("tetris", max_steps=10), n_episodes=1)
    assert s.half_width is None and s.ci is None
    assert s.format().endswith("± NA (95% CI, n=1)")


def test_identical_seeds_identical_summaries():
    cfg = EnvConfig("candycrush", max_steps=10)
    a = evaluate(None, cfg, n_episodes=3, seeds=[4, 9, 4])
    b = evaluate(None, cfg, n_episodes=3, seeds=[4, 9, 4])
    assert a == b and a.rewards[0] == a.rewards[2]


def test_evaluate_errors(tmp_path):
    with pytest.raises(ValueError):
        evaluate(None, EnvConfig("g2048"), n_episodes=2, seeds=[1])
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(BankError):
        evaluate(bad, EnvConfig("g2048"), n_episodes=1)


def test_summary_math():
    s = summarize_rewards("g2048", [1.0, 3.0], [0, 1])
    assert s.mean == 2.0 and s.std == pytest.approx(2 ** 0.5)
    assert s.half_width == pytest.approx(1.96)
    assert s.ci == pytest.approx((0.04, 3.96))
    assert s.format() == "g2048: 2.00 ± 1.96 (95% CI, n=2)"
    with pytest.raises(ValueError):
        summarize_rewards("g2048", [], [])


def test_empty_bank_evaluation_runs():
    assert evaluate(None, EnvConfig("g2048", max_steps=5), n_episodes=2).n == 2
