# test_validation — bad configs die early

"""
Run with: pytest tests/unit/test_validation.py -v
"""

import pytest

from src.cisrl.core.errors import ConfigError
from src.cisrl.utils.validation import load_experiment


def _write(tmp_path, text: str):
    f = tmp_path / "exp.txt"
    f.write_text(text)
    return f


def test_defaults_without_a_file():
    cfg = load_experiment()
    assert cfg.seeds == [0, 1, 2]
    assert cfg.reward == "Invariance"
    assert cfg.max_itr == 20


def test_file_values_parse(tmp_path):
    cfg = load_experiment(_write(tmp_path, "seeds=4,5\nepisodes=20\nbatch_episodes=5\nrobust=true\n"))
    assert cfg.seeds == [4, 5]
    assert cfg.episodes == 20
    assert cfg.robust is True


def test_overrides_win_and_none_is_skipped(tmp_path):
    cfg = load_experiment(_write(tmp_path, "seed=1\n"), seed=9, mode=None)
    assert cfg.seed == 9
    assert cfg.mode == "deterministic"


def test_unknown_key(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment(_write(tmp_path, "epsiodes=10\n"))


def test_bad_reward_variant(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment(_write(tmp_path, "reward=Happiness\n"))


def test_missing_referenced_file(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_experiment(_write(tmp_path, f"set_file={tmp_path / 'nope.txt'}\n"))
    assert "set_file" in str(exc.value)


def test_duplicate_seeds(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment(_write(tmp_path, "seeds=1,1\n"))


def test_empty_seeds(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment(_write(tmp_path, "seeds=\n"))


def test_batches_must_divide(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment(_write(tmp_path, "episodes=25\nbatch_episodes=10\n"))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment(tmp_path / "absent.txt")


def test_job_timeout_parses(tmp_path):
    assert load_experiment().job_timeout is None
    cfg = load_experiment(_write(tmp_path, "job_timeout=90\n"))
    assert cfg.job_timeout == 90.0
