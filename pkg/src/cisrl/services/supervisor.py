# supervisor — nothing unsafe reaches the plant

"""
Online safety supervisor.

Each control step: the agent proposes, the check vets. Unsafe proposals trigger a small
retraining round at the same held state (fresh exploratory actions, one PPO update), then the
agent proposes again. After max_itr updates without a safe proposal the backup table answers,
and its input is re-certified against the polytope before it is applied.

Every return path hands back an input whose verdict is safe, or raises SafetyFaultError.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from src.cisrl.adapters.metrics_client import (
    backup_fallback_total,
    retrain_updates_total,
    set_violations_total,
    supervisor_checks_total,
    supervisor_unsafe_total,
    worst_case_latency,
)
from src.cisrl.config import settings
from src.cisrl.core.cis_synth import BackupTable, GriddedSet, backup_lookup
from src.cisrl.core.dynamics import DiscreteModel
from src.cisrl.core.errors import SafetyFaultError, UpdateAbortedError
from src.cisrl.core.geometry import BoxSet, HPolytope, contains, margin, sample_uniform
from src.cisrl.core.models import SupervisorConfig
from src.cisrl.rl.ppo_agent import PPOAgent, Transition
from src.cisrl.rl.reward_engine import graded_penalty, reward
from src.cisrl.services.worst_case import CheckMode, Verdict, check_action

log = logging.getLogger(__name__)

VIOLATION_TOL = 1e-9  # realized margin above this counts; below is float rounding on the boundary


@dataclass(eq=False)
class Backup:
    """Backup table, its gridded set, and the input grid scanned when a stored input won't re-certify."""
    table: BackupTable
    S: GriddedSet
    u_grid: np.ndarray


@dataclass(eq=False)
class StepRecord:
    k: int
    x: np.ndarray
    u_raw: np.ndarray  # agent's first proposal
    u_applied: np.ndarray
    J: float  # verdict of the applied input
    safe: bool  # verdict of the first proposal
    updates_used: int
    fallback: bool
    w_applied: np.ndarray | None = None
    violated: bool = False  # realized next state left the set
    check_us: list[float] = field(default_factory=list)
    update_us: list[float] = field(default_factory=list)


@dataclass
class OnlineResult:
    violations: int = 0
    fallback_count: int = 0
    updates_total: int = 0
    episodes: list[list[StepRecord]] = field(default_factory=list)


def successor_states(model: DiscreteModel, records: list[StepRecord]) -> np.ndarray:
    """x_1 .. x_K of an episode, recomputed from each record's x, applied u and w."""
    if not records:
        return np.empty((0, model.n))
    return np.array([
        model.step(r.x, r.u_applied, r.w_applied if r.w_applied is not None else np.zeros(model.d))
        for r in records
    ])


def _mode(config: SupervisorConfig) -> CheckMode:
    return "worst_case" if config.robust else "nominal"


def _timed_check(model, P, x, u, config: SupervisorConfig, rec_us: list[float]) -> Verdict:
    mode = _mode(config)
    t0 = time.perf_counter()
    verdict = check_action(model, P, x, u, mode, config.W)
    dt = time.perf_counter() - t0
    rec_us.append(dt * 1e6)
    if settings.metrics_enabled:
        supervisor_checks_total.labels(mode=mode).inc()
        if not verdict.safe:
            supervisor_unsafe_total.labels(mode=mode).inc()
        if mode == "worst_case":
            worst_case_latency.observe(dt)
    return verdict


def _retrain(model, P, agent: PPOAgent, x, config: SupervisorConfig, rng, rec: StepRecord) -> None:
    """
    retrain_samples_per_update fresh actions at the held state, each a terminal one-step
    episode, so its advantage is r - V(x). Unsafe samples carry the graded penalty when enabled.
    """
    scale = float(np.max(P.bbox.widths))
    batch: list[list[Transition]] = []
    for _ in range(config.retrain_samples_per_update):
        act = agent.act(x, explore=True, rng=rng)
        v = _timed_check(model, P, x, act.u, config, rec.check_us)
        if not v.safe and config.graded_penalty:
            r = graded_penalty(config.reward, v.J, scale)
        else:
            r = reward(config.reward, v.x_pred, v.safe, x)
        batch.append([Transition(x=x, u=act.u, r=r, x_next=v.x_pred, logprob=act.logprob,
                                 done=True, a_raw=act.a_raw)])
    t0 = time.perf_counter()
    agent.update(batch, lr=config.retrain_lr, epochs=config.retrain_epochs)
    rec.update_us.append((time.perf_counter() - t0) * 1e6)
    if settings.metrics_enabled:
        retrain_updates_total.inc()


def _fallback(model, P, x, config: SupervisorConfig, backup: Backup, rec: StepRecord) -> tuple[np.ndarray, Verdict]:
    """Stored input first; if the polytope disagrees, scan the input grid nearest-first."""
    u_b = backup_lookup(backup.table, backup.S, x)
    v = _timed_check(model, P, x, u_b, config, rec.check_us)
    if v.safe:
        return u_b, v
    log.warning(f"backup input {u_b} fails re-certification at {x}, scanning input grid")
    grid = np.atleast_2d(backup.u_grid).reshape(-1, u_b.shape[0])
    order = np.argsort(np.abs(grid - u_b).sum(axis=1), kind="stable")
    for u in grid[order]:
        v = _timed_check(model, P, x, u, config, rec.check_us)
        if v.safe:
            return u.copy(), v
    log.error(f"safety fault: no certified input at x={x}")
    raise SafetyFaultError(f"no input in the backup table or input grid certifies x={x}")


def supervise_step(model: DiscreteModel, P: HPolytope, agent: PPOAgent, x, config: SupervisorConfig,
                   rng: np.random.Generator, backup: Backup, k: int = 0,
                   explore: bool = True) -> tuple[np.ndarray, StepRecord]:
    """
    Vet, retrain at the held state, fall back. Returns the applied input and the step record.
    explore=False vets the policy mean instead of a sample (shielded greedy evaluation).
    """
    x = np.asarray(x, dtype=float)
    rec = StepRecord(k=k, x=x.copy(), u_raw=np.empty(0), u_applied=np.empty(0),
                     J=float("nan"), safe=False, updates_used=0, fallback=False)

    while True:
        act = agent.act(x, explore=explore, rng=rng)
        verdict = _timed_check(model, P, x, act.u, config, rec.check_us)
        if rec.u_raw.size == 0:
            rec.u_raw = act.u
            rec.safe = verdict.safe
        if verdict.safe:
            u, final = act.u, verdict
            break
        if config.max_itr is not None and rec.updates_used >= config.max_itr:
            u, final = _fallback(model, P, x, config, backup, rec)
            rec.fallback = True
            break
        try:
            _retrain(model, P, agent, x, config, rng, rec)
        except UpdateAbortedError as e:
            log.warning(f"retraining aborted at k={k}: {e}; using backup")
            u, final = _fallback(model, P, x, config, backup, rec)
            rec.fallback = True
            break
        rec.updates_used += 1

    if not final.safe:
        raise SafetyFaultError(f"unsafe input {u} about to be returned at x={x}")
    if rec.fallback:
        if settings.metrics_enabled:
            backup_fallback_total.inc()
        log.info(f"k={k}: backup input {u} after {rec.updates_used} updates")
    rec.u_applied = np.asarray(u, dtype=float)
    rec.J = final.J
    return rec.u_applied, rec


def run_online(model: DiscreteModel, P: HPolytope, agent: PPOAgent, n_episodes: int, steps: int,
               config: SupervisorConfig, backup: Backup, disturbance: BoxSet | None = None,
               seed: int = 0, initial_states=None, explore: bool = True) -> OnlineResult:
    """
    Supervised episodes on the plant. disturbance given -> w uniform over it each step.
    A realized state outside P counts as a violation and ends that episode.
    The agent keeps learning across episodes; pass a clone to keep the original.
    """
    rng = np.random.default_rng(seed)
    res = OnlineResult()
    starts = None if initial_states is None else np.atleast_2d(np.asarray(initial_states, dtype=float))
    if starts is not None:
        n_episodes = starts.shape[0]

    for ep in range(n_episodes):
        x = starts[ep] if starts is not None else sample_uniform(P, P.bbox, rng)
        if not contains(P, x):
            raise ValueError(f"episode {ep}: initial state {x} outside the set")
        records: list[StepRecord] = []
        for k in range(steps):
            u, rec = supervise_step(model, P, agent, x, config, rng, backup, k, explore)
            w = rng.uniform(disturbance.lower, disturbance.upper) if disturbance is not None else np.zeros(model.d)
            rec.w_applied = w
            records.append(rec)
            res.updates_total += rec.updates_used
            res.fallback_count += int(rec.fallback)
            x = model.step(x, u, w)
            if margin(P, x) > VIOLATION_TOL:
                rec.violated = True
                res.violations += 1
                if settings.metrics_enabled:
                    set_violations_total.inc()
                log.warning(f"episode {ep} step {k}: realized state {x} left the set")
                break
        res.episodes.append(records)

    log.info(
        f"online: {n_episodes} episodes, {res.violations} violations, "
        f"{res.fallback_count} fallbacks, {res.updates_total} updates"
    )
    return res
