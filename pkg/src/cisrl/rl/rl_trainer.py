# rl_trainer — learn inside the fence

"""
Offline training with the safe set as guide rail.

Episodes start from a uniform draw inside the set. Every step the nominal model predicts the
next state; if the prediction leaves the set (or, robust mode, the worst case does) the agent
gets r2 and the state is held where it was, so it keeps practicing at the spot it failed.
Every batch_episodes episodes the pooled batch goes to one PPO update.
"""

import csv
import logging
from pathlib import Path
from typing import NamedTuple, Protocol

import numpy as np

from src.cisrl.adapters.metrics_client import training_episodes_total
from src.cisrl.config import settings
from src.cisrl.core.dynamics import U_BOX, X_BOX, DiscreteModel
from src.cisrl.core.errors import TrainingHaltedError, UpdateAbortedError
from src.cisrl.core.geometry import BoxSet, HPolytope, contains, sample_uniform
from src.cisrl.core.models import LearningCurve, RewardSpec, TrainConfig
from src.cisrl.rl.ppo_agent import Action, PPOAgent, Transition
from src.cisrl.rl.reward_engine import reward
from src.cisrl.services.worst_case import check_action

log = logging.getLogger(__name__)


class Policy(Protocol):
    def act(self, x, explore: bool, rng: np.random.Generator | None = None) -> Action: ...


class PolicyTestResult(NamedTuple):
    failure_rate: float
    mean_score: float
    failures: int
    episodes: int


def rollout_episode(model: DiscreteModel, agent: Policy, config: TrainConfig,
                    rng: np.random.Generator, x0=None) -> list[Transition]:
    """One exploratory episode of steps_per_episode transitions with the reset rule."""
    x = sample_uniform(config.set, config.set_box, rng) if x0 is None else np.asarray(x0, dtype=float)
    if not contains(config.set, x):
        raise ValueError(f"initial state {x} is outside the training set")
    worst = config.robust and not config.nominal_offline_check

    out: list[Transition] = []
    steps = config.steps_per_episode
    for k in range(steps):
        act = agent.act(x, explore=True, rng=rng)
        if worst:
            verdict = check_action(model, config.set, x, act.u, "worst_case", config.W)
        else:
            verdict = check_action(model, config.set, x, act.u, "nominal")
        r = reward(config.reward, verdict.x_pred, verdict.safe, x)
        out.append(Transition(
            x=x, u=act.u, r=r, x_next=verdict.x_pred, logprob=act.logprob,
            done=k == steps - 1, a_raw=act.a_raw,
        ))
        if verdict.safe:
            x = verdict.x_pred
        # else: reset, x stays put for the next step
    if settings.metrics_enabled:
        training_episodes_total.inc()
    return out


def train_offline(model: DiscreteModel, config: TrainConfig, agent: PPOAgent | None = None,
                  x_box: BoxSet = X_BOX, u_box: BoxSet = U_BOX) -> tuple[PPOAgent, LearningCurve]:
    """
    Episodes in order, one update per batch. An aborted update stops training and the
    partial curve rides out on TrainingHaltedError.
    """
    rng = np.random.default_rng(config.seed)
    agent = agent or PPOAgent(x_box, u_box, config.hyper, seed=config.seed)
    curve = LearningCurve()
    batch: list[list[Transition]] = []

    for ep in range(config.episodes):
        episode = rollout_episode(model, agent, config, rng)
        curve.scores.append(float(sum(t.r for t in episode)))
        batch.append(episode)
        if len(batch) == config.batch_episodes:
            try:
                losses = agent.update(batch)
            except UpdateAbortedError as e:
                log.error(f"training halted at episode {ep + 1}: {e}")
                raise TrainingHaltedError(f"update aborted at episode {ep + 1}: {e}", curve) from e
            log.info(
                f"episode {ep + 1}/{config.episodes} avg={curve.running_avg[-1]:.1f} "
                f"policy={losses.policy:.4g} value={losses.value:.4g} kl={losses.kl:.3g}"
            )
            batch = []
    return agent, curve


def test_policy(model: DiscreteModel, agent: Policy, P: HPolytope, n_episodes: int, seed: int,
                steps: int = 200, initial_states=None, W: BoxSet | None = None,
                reward_spec: RewardSpec | None = None) -> PolicyTestResult:
    """
    Greedy rollouts on the real plant. An episode fails the first time the realized next
    state leaves P; it stops there. W given -> w drawn uniformly from it each step.
    Rewards are summed for reporting only.
    """
    rng = np.random.default_rng(seed)
    spec = reward_spec or RewardSpec()
    if initial_states is not None:
        starts = np.atleast_2d(np.asarray(initial_states, dtype=float))
        n_episodes = starts.shape[0]
    failures = 0
    total = 0.0
    for ep in range(n_episodes):
        x = starts[ep] if initial_states is not None else sample_uniform(P, P.bbox, rng)
        score = 0.0
        for _ in range(steps):
            u = agent.act(x, explore=False).u
            w = rng.uniform(W.lower, W.upper) if W is not None else None
            x_next = model.step(x, u, w)
            inside = contains(P, x_next)
            score += reward(spec, x_next, inside, x)
            if not inside:
                failures += 1
                break
            x = x_next
        total += score
    rate = failures / n_episodes if n_episodes else 0.0
    log.info(f"policy test: {failures}/{n_episodes} failed ({rate:.2%})")
    return PolicyTestResult(rate, total / n_episodes if n_episodes else 0.0, failures, n_episodes)


test_policy.__test__ = False  # keep pytest from collecting it when imported into a test module


def write_curve(curve: LearningCurve, path: str | Path) -> Path:
    """episode,score,running_avg with 1-based episodes."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["episode", "score", "running_avg"])
        for i, (s, avg) in enumerate(zip(curve.scores, curve.running_avg), start=1):
            w.writerow([i, repr(float(s)), repr(float(avg))])
    return p
