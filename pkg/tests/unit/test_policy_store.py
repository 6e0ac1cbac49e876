# test_policy_store — saved agents act the same after a reload

"""
Run with: pytest tests/unit/test_policy_store.py -v
"""

import numpy as np
import pytest

from src.cisrl.core.dynamics import U_BOX, X_BOX
from src.cisrl.core.errors import ConfigError
from src.cisrl.core.geometry import BoxSet
from src.cisrl.core.models import Hyper
from src.cisrl.rl.policy_store import load_agent, save_agent
from src.cisrl.rl.ppo_agent import PPOAgent


def test_reload_is_bit_exact(tmp_path):
    agent = PPOAgent(X_BOX, U_BOX, seed=7)
    back = load_agent(save_agent(agent, tmp_path / "a.weights"), X_BOX, U_BOX)
    assert np.array_equal(back.flat_params(), agent.flat_params())
    assert back.seed == 7
    x = [0.3, 352.0]
    assert np.array_equal(back.act(x, False).u, agent.act(x, False).u)


def test_hidden_size_comes_from_file(tmp_path):
    agent = PPOAgent(X_BOX, U_BOX, Hyper(hidden=16), seed=0)
    back = load_agent(save_agent(agent, tmp_path / "a.weights"), X_BOX, U_BOX)
    assert back.hyper.hidden == 16


def test_header(tmp_path):
    path = save_agent(PPOAgent(X_BOX, U_BOX, seed=0), tmp_path / "a.weights")
    lines = path.read_text().splitlines()
    assert lines[0] == "# cisrl-weights v1"
    assert lines[1].startswith("layers 2 ")
    assert int(lines[4].split()[1]) == len(lines) - 5


def test_wrong_boxes_rejected(tmp_path):
    path = save_agent(PPOAgent(X_BOX, U_BOX, seed=0), tmp_path / "a.weights")
    with pytest.raises(ConfigError):
        load_agent(path, BoxSet([0.0], [1.0]), U_BOX)


def test_not_a_weights_file(tmp_path):
    f = tmp_path / "a.weights"
    f.write_text("hello\n")
    with pytest.raises(ConfigError):
        load_agent(f, X_BOX, U_BOX)


def test_truncated_file(tmp_path):
    path = save_agent(PPOAgent(X_BOX, U_BOX, seed=0), tmp_path / "a.weights")
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-3]) + "\n")
    with pytest.raises(ConfigError):
        load_agent(path, X_BOX, U_BOX)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_agent(tmp_path / "gone.weights", X_BOX, U_BOX)
