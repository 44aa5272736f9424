from pathlib import Path

import pytest

from skillcoevo.config import (SCHEDULES, CoEvolutionConfig, config_to_ini, load_config,
                               parse_config)
from skillcoevo.envs import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize("game", sorted(SCHEDULES))
def test_shipped_configs_load_with_their_schedules(game):
    cfg = load_config(CONFIGS / f"{game}.ini", environ={})
    assert cfg.game.game_id == game
    assert (cfg.total_steps, cfg.episodes_per_step, cfg.ckpt_interval) == SCHEDULES[game]
    assert Path(cfg.output_dir).name == game


def test_table_schedules():
    assert SCHEDULES["g2048"] == (10, 8, 3)
    c = CoEvolutionConfig.for_game("g2048", seed=4)
    assert c.game.seed == 4 and c.total_steps == 10


@pytest.mark.parametrize("game", sorted(SCHEDULES))
def test_ini_roundtrip(game):
    cfg = CoEvolutionConfig.for_game(game, seed=3, workers=2, seed_bank=None)
    back = parse_config(config_to_ini(cfg), environ={})
    assert back == cfg


def test_file_api_key_rejected():
    text = "[game]\nid = g2048\n[oracle]\napi_key = secret\n"
    with pytest.raises(ConfigError, match="environment"):
        parse_config(text, environ={})


def test_secrets_never_serialized():
    cfg = parse_config("[game]\nid = tetris\n", environ={"ORACLE_API_KEY": "s3cret",
                                                         "ORACLE_ENDPOINT": "http://o"})
    assert cfg.oracle.api_key == "s3cret" and cfg.policy.oracle.endpoint == "http://o"
    assert "s3cret" not in config_to_ini(cfg)


def test_env_overrides_file_for_oracle_only():
    text = "[game]\nid = g2048\n[oracle]\nendpoint = http://file\nmodel = filemodel\n"
    cfg = parse_config(text, environ={"ORACLE_MODEL": "envmodel"})
    assert cfg.oracle.endpoint == "http://file" and cfg.oracle.model == "envmodel"
    cfg = parse_config(text, environ={"ORACLE_ENDPOINT": "http://env"})
    assert cfg.oracle.endpoint == "http://env"


@pytest.mark.parametrize("text", [
    "[game]\nid = g2048\n[bogus]\nx = 1\n",
    "[game]\nid = g2048\ncolor = red\n",
    "[game]\nid = g2048\n[maintenance]\nn_matt = 3\n",
    "[game]\nid = g2048\n[run]\nepochs = 3\n",
    "[run]\ntotal_steps = 3\n",
    "[game]\nid = g2048\n[run]\ntotal_steps = many\n",
    "[game]\nid = g2048\n[run]\ntotal_steps = 0\n",
    "[game]\nid = chess\n",
    "[game]\nid = g2048\n[boundaries]\nw_pred = 0.9\n",
    "no section here",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text, environ={})


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_relative_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "c.ini").write_text("[game]\nid = g2048\n[run]\noutput_dir = out\n"
                                    "seed_bank = b.json\n")
    cfg = load_config(tmp_path / "c.ini", environ={})
    assert cfg.output_dir == str(tmp_path / "out") and cfg.seed_bank == str(tmp_path / "b.json")
