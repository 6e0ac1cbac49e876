# policy_store — where trained agents live between runs

"""
Agent weights as a flat plain-text vector. Header carries layer sizes, current std and the
init seed; body is one 17-digit float per line, in parameter order, so reload is bit-exact.
Optimizer state is not stored; a reloaded agent starts Adam fresh.
"""

import logging
import math
from pathlib import Path

import numpy as np

from src.cisrl.core.errors import ConfigError
from src.cisrl.core.geometry import BoxSet
from src.cisrl.core.models import Hyper
from src.cisrl.rl.ppo_agent import PPOAgent

log = logging.getLogger(__name__)

MAGIC = "# cisrl-weights v1"


def save_agent(agent: PPOAgent, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    vec = agent.flat_params()
    std = float(np.exp(agent.net.log_std.detach().numpy()).min())
    header = [
        MAGIC,
        "layers " + " ".join(str(s) for s in agent.net.layer_sizes()),
        f"std {std:.17g}",
        f"seed {agent.seed}",
        f"count {vec.size}",
    ]
    body = ["%.17g" % v for v in vec]
    p.write_text("\n".join(header + body) + "\n", encoding="utf-8")
    log.info(f"saved agent weights to {p} ({vec.size} values, std={std:.4f})")
    return p


def _read_header(lines: list[str], path: Path) -> dict[str, list[str]]:
    if not lines or lines[0].strip() != MAGIC:
        raise ConfigError(f"{path} is not a weights file")
    head: dict[str, list[str]] = {}
    for ln in lines[1:5]:
        key, *vals = ln.split()
        head[key] = vals
    for key in ("layers", "std", "seed", "count"):
        if key not in head:
            raise ConfigError(f"{path}: header missing {key!r}")
    return head


def load_agent(path: str | Path, x_box: BoxSet, u_box: BoxSet, hyper: Hyper | None = None) -> PPOAgent:
    """Rebuild an agent with the stored layer sizes and load the vector verbatim."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"weights file not found: {p}")
    lines = p.read_text(encoding="utf-8").splitlines()
    head = _read_header(lines, p)

    layers = [int(v) for v in head["layers"]]
    if layers[0] != x_box.n or layers[-1] != u_box.n:
        raise ConfigError(f"{p}: net maps {layers[0]} -> {layers[-1]}, boxes are {x_box.n} -> {u_box.n}")
    hyper = hyper or Hyper()
    if hyper.hidden != layers[1]:
        hyper = hyper.model_copy(update={"hidden": layers[1]})
    std = float(head["std"][0])
    if std < hyper.std_floor and not math.isclose(std, hyper.std_floor):
        log.warning(f"{p}: stored std {std} below floor {hyper.std_floor}")

    count = int(head["count"][0])
    try:
        vec = np.array([float(v) for v in lines[5:5 + count]], dtype=float)
    except ValueError as e:
        raise ConfigError(f"{p}: bad weight value: {e}") from e
    if vec.size != count:
        raise ConfigError(f"{p}: header says {count} values, found {vec.size}")

    agent = PPOAgent(x_box, u_box, hyper, seed=int(head["seed"][0]))
    agent.load_flat_params(vec)
    return agent
