# harness — the whole study, one subcommand at a time

"""
Experiment orchestration behind the CLI. Each cmd_* takes a validated ExperimentConfig,
writes its artifacts under out_dir and returns a RunSummary (also written as JSON).

Layout under out_dir:
  cis.poly / cis_grid.txt, rcis.poly / rcis_grid.txt, verify.json   (synth)
  train/<variant>_seed<N>.weights, train/<variant>_seed<N>_curve.csv (train)
  test/failure_rates.csv                                            (test)
  online_<mode>/steps.csv, timing.csv, summary.json                 (online)
  econ/econ.csv, econ/traj_<variant>.csv                            (econ)
  ssopt.json                                                        (ssopt)

Seeds and variants fan out through the run dispatcher; everything else runs in-process.
"""

import csv
import json
import logging
from pathlib import Path

import numpy as np

from src.cisrl.core.cis_synth import Grid, extract_polytope, synthesize, u_grid, verify_invariance
from src.cisrl.core.dynamics import U_BOX, W_BOX, X_BOX, CSTRModel, steady_state
from src.cisrl.core.errors import ConfigError, ConvergenceError, NoFeasibleSteadyStateError, TrainingHaltedError
from src.cisrl.core.geometry import HPolytope, box_to_polytope, contains, sample_many
from src.cisrl.core.models import (
    ControlInput,
    ExperimentConfig,
    Hyper,
    ModelParams,
    RewardSpec,
    RunSummary,
    State,
    SteadyStateOptimum,
    SupervisorConfig,
    TrainConfig,
)
from src.cisrl.core.set_store import load_model_params, read_gridded, read_polytope, write_gridded, write_polytope
from src.cisrl.core.state_hash import compute_state_hash
from src.cisrl.rl.policy_store import load_agent, save_agent
from src.cisrl.rl.ppo_agent import PPOAgent
from src.cisrl.rl.reward_engine import economic_stage, episode_economics, validate_reward_spec, zone_violation
from src.cisrl.rl.rl_trainer import test_policy, train_offline, write_curve
from src.cisrl.services.run_dispatcher import RunJob, run_all
from src.cisrl.services.step_log import timing_quantiles, verify_logs, write_step_log, write_timing
from src.cisrl.services.supervisor import Backup, run_online, successor_states
from src.cisrl.services.worst_case import naive_witnesses

log = logging.getLogger(__name__)

CIS_POLY, CIS_GRID = "cis.poly", "cis_grid.txt"
RCIS_POLY, RCIS_GRID = "rcis.poly", "rcis_grid.txt"
VARIANTS = ("cis", "nocis")
ECON_VARIANTS = ("Invariance", "Economic", "EconomicZone")
SSOPT_STEP = 0.05  # K
SS_GUESSES = ((0.5, 350.0), (0.41, 355.0), (0.2, 354.0), (0.8, 346.0), (0.95, 345.0))


# -- shared plumbing --

def _params(cfg: ExperimentConfig) -> ModelParams:
    return load_model_params(cfg.model_file) if cfg.model_file else ModelParams()


def _out(cfg: ExperimentConfig, *sub: str) -> Path:
    p = Path(cfg.out_dir, *sub)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_summary(summary: RunSummary, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def _set_files(cfg: ExperimentConfig, robust: bool) -> tuple[Path, Path]:
    poly = cfg.set_file or Path(cfg.out_dir, RCIS_POLY if robust else CIS_POLY)
    grid = cfg.grid_file or Path(cfg.out_dir, RCIS_GRID if robust else CIS_GRID)
    for p in (poly, grid):
        if not Path(p).is_file():
            raise ConfigError(f"{p} not found; run synth first or set set_file/grid_file")
    return Path(poly), Path(grid)


def _hyper(cfg: ExperimentConfig) -> Hyper:
    return Hyper(lr=cfg.lr, batch_episodes=cfg.batch_episodes)


def _reward_spec(cfg: ExperimentConfig, variant: str | None = None) -> RewardSpec:
    """r1/r2 from the config; EconomicZone takes zone_r2 so the penalty stays below every zone stage."""
    match variant or cfg.reward:
        case "Invariance":
            return RewardSpec(variant="Invariance", r1=cfg.r1, r2=cfg.r2)
        case "EconomicZone":
            return RewardSpec(variant="EconomicZone", r2=cfg.zone_r2)
        case "SetPoint":
            raise ConfigError("SetPoint needs x_s, which the experiment file does not carry")
        case other:
            return RewardSpec(variant=other, r2=cfg.r2)


def shared_initial_states(P: HPolytope, count: int, seed: int) -> tuple[np.ndarray, str]:
    """The protocol list every variant is tested on, plus its hash for the log."""
    states = sample_many(P, P.bbox, np.random.default_rng(seed), count)
    digest = compute_state_hash(states)
    log.info(f"shared initial states: {count} from seed {seed}, sha256 {digest[:16]}")
    return states, digest


def _weights_path(cfg: ExperimentConfig, variant: str, seed: int) -> Path:
    return Path(cfg.out_dir, "train", f"{variant}_seed{seed}.weights")


# -- synth --

def _synth_one(cfg: ExperimentConfig, robust: bool) -> dict:
    model = CSTRModel(_params(cfg))
    grid = Grid(X_BOX, (cfg.grid_resolution, cfg.grid_resolution))
    U = u_grid(U_BOX, cfg.u_points)
    W = W_BOX.vertices() if robust else []
    tag = "rcis" if robust else "cis"

    S, table = synthesize(model, X_BOX, U, W, grid)
    P = extract_polytope(S, model, U, W, n_samples=cfg.verify_samples, seed=cfg.seed)
    # fresh samples for the recorded report
    report = verify_invariance(P, model, U, W, cfg.verify_samples, rng=np.random.default_rng(cfg.seed + 1),
                               cell_width=grid.cell_width)

    write_gridded(S, table, Path(cfg.out_dir, RCIS_GRID if robust else CIS_GRID))
    write_polytope(P, Path(cfg.out_dir, RCIS_POLY if robust else CIS_POLY))
    bb = P.bbox
    return {
        f"{tag}_members": S.count,
        f"{tag}_sweeps": len(S.trace) - 1,
        f"{tag}_rows": P.c,
        f"{tag}_counterexamples": int(report.counterexamples.shape[0]),
        f"{tag}_cA_lo": float(bb.lower[0]),
        f"{tag}_cA_hi": float(bb.upper[0]),
        f"{tag}_T_lo": float(bb.lower[1]),
        f"{tag}_T_hi": float(bb.upper[1]),
    }


def cmd_synth(cfg: ExperimentConfig) -> RunSummary:
    """CIS and RCIS, gridded + polytope, plus a verification report."""
    out = _out(cfg)
    stats: dict = {}
    for robust in (False, True):
        stats.update(_synth_one(cfg, robust))

    cis, _ = read_gridded(out / CIS_GRID)
    rcis, _ = read_gridded(out / RCIS_GRID)
    subset = bool(np.all(cis.member[rcis.member]))
    if not subset:
        log.warning("robust kernel is not contained in the deterministic one")
    stats["rcis_subset_of_cis"] = "true" if subset else "false"

    (out / "verify.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    summary = RunSummary(name="synth", extra=stats)
    _write_summary(summary, out / "synth_summary.json")
    return summary


# -- train / test --

def _train_job(cfg: ExperimentConfig, P: HPolytope, variant: str, seed: int) -> dict:
    """One seed of one variant. Writes weights and curve itself so nothing heavy crosses processes."""
    model = CSTRModel(_params(cfg))
    tc = TrainConfig(
        episodes=cfg.episodes, steps_per_episode=cfg.steps, batch_episodes=cfg.batch_episodes,
        seed=seed, set=P, set_box=P.bbox, reward=_reward_spec(cfg), hyper=_hyper(cfg),
        robust=cfg.robust, W=W_BOX if cfg.robust else None,
    )
    curve_path = Path(cfg.out_dir, "train", f"{variant}_seed{seed}_curve.csv")
    try:
        agent, curve = train_offline(model, tc)
    except TrainingHaltedError as e:
        write_curve(e.curve, curve_path)
        raise
    write_curve(curve, curve_path)
    save_agent(agent, _weights_path(cfg, variant, seed))
    avg = curve.running_avg
    return {"final_avg": avg[-1] if avg else 0.0, "first_avg": float(np.mean(curve.scores[:100])) if avg else 0.0}


def cmd_train(cfg: ExperimentConfig) -> RunSummary:
    """With-CIS and no-CIS agents for every seed, then the shared-list test."""
    _out(cfg, "train")
    poly, _ = _set_files(cfg, cfg.robust)
    sets = {"cis": read_polytope(poly), "nocis": box_to_polytope(X_BOX)}
    for P in sets.values():
        validate_reward_spec(_reward_spec(cfg), P)
    jobs = [
        RunJob(f"{v}_seed{s}", _train_job, {"cfg": cfg, "P": sets[v], "variant": v, "seed": s}, cfg.job_timeout)
        for v in VARIANTS for s in cfg.seeds
    ]
    outcomes = run_all(jobs, cfg.workers)

    extra: dict = {}
    for o in outcomes:
        if o.ok:
            extra[f"{o.name}_final_avg"] = o.result["final_avg"]
            extra[f"{o.name}_first_avg"] = o.result["first_avg"]
        else:
            extra[f"{o.name}_error"] = o.error
    failed = [o.name for o in outcomes if not o.ok]
    if failed:
        log.error(f"training failed for {failed}")

    tested = cmd_test(cfg)
    summary = RunSummary(name="train", failure_rate=tested.failure_rate, episodes=cfg.episodes,
                         extra={**extra, **tested.extra})
    _write_summary(summary, _out(cfg) / "train_summary.json")
    return summary


def _test_job(cfg: ExperimentConfig, P: HPolytope, weights: Path, starts: np.ndarray) -> tuple[float, float]:
    model = CSTRModel(_params(cfg))
    agent = load_agent(weights, X_BOX, U_BOX, _hyper(cfg))
    res = test_policy(model, agent, P, len(starts), seed=cfg.seed, steps=cfg.steps, initial_states=starts,
                      W=W_BOX if cfg.robust else None, reward_spec=_reward_spec(cfg))
    return res.failure_rate, res.mean_score


def cmd_test(cfg: ExperimentConfig) -> RunSummary:
    """Every saved agent on the same initial-state list, failure judged against the (R)CIS."""
    poly, _ = _set_files(cfg, cfg.robust)
    P = read_polytope(poly)
    starts, digest = shared_initial_states(P, cfg.test_episodes, cfg.seed)

    jobs = []
    for v in VARIANTS:
        for s in cfg.seeds:
            w = _weights_path(cfg, v, s)
            if w.is_file():
                jobs.append(RunJob(f"{v}_seed{s}", _test_job, {"cfg": cfg, "P": P, "weights": w, "starts": starts},
                                   cfg.job_timeout))
            else:
                log.warning(f"no weights at {w}, skipping")
    if not jobs:
        raise ConfigError(f"no trained weights under {Path(cfg.out_dir, 'train')}; run train first")
    outcomes = run_all(jobs, cfg.workers)

    out = _out(cfg, "test")
    rates: dict[str, list[float]] = {v: [] for v in VARIANTS}
    scores: list[float] = []
    with (out / "failure_rates.csv").open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["variant", "seed", "failure_rate", "mean_score", "state_hash"])
        for job, o in zip(jobs, outcomes):
            if not o.ok:
                log.error(f"test {job.name} failed: {o.error}")
                continue
            variant, seed = job.name.split("_seed")
            rate, score = o.result
            rates[variant].append(rate)
            if variant == "cis":
                scores.append(score)
            w.writerow([variant, seed, repr(rate), repr(score), digest])

    extra: dict = {"state_hash": digest}
    for v in VARIANTS:
        if rates[v]:
            extra[f"{v}_mean_failure"] = float(np.mean(rates[v]))
    summary = RunSummary(
        name="test",
        failure_rate=extra.get("cis_mean_failure"),
        mean_score=float(np.mean(scores)) if scores else None,
        episodes=len(starts),
        extra=extra,
    )
    _write_summary(summary, out / "summary.json")
    return summary


# -- online --

def _online_mode(cfg: ExperimentConfig) -> str:
    if cfg.robust and cfg.mode == "deterministic":
        return "robust"
    return cfg.mode


def _load_or_fresh(cfg: ExperimentConfig) -> PPOAgent:
    w = cfg.weights_file or _weights_path(cfg, "cis", cfg.seed)
    if Path(w).is_file():
        return load_agent(w, X_BOX, U_BOX, _hyper(cfg))
    log.warning(f"no weights at {w}, supervising an untrained agent")
    return PPOAgent(X_BOX, U_BOX, _hyper(cfg), seed=cfg.seed)


def cmd_online(cfg: ExperimentConfig) -> RunSummary:
    """
    Supervised episodes. deterministic: nominal check, clean plant. robust: worst-case check,
    w uniform over W. naive: nominal check on the disturbed plant against the RCIS.
    """
    mode = _online_mode(cfg)
    disturbed = mode in ("robust", "naive")
    poly, grid = _set_files(cfg, disturbed)
    P = read_polytope(poly)
    S, table = read_gridded(grid)
    model = CSTRModel(_params(cfg))
    agent = _load_or_fresh(cfg)
    before = agent.clone()

    sup = SupervisorConfig(max_itr=cfg.max_itr, robust=mode == "robust", W=W_BOX if disturbed else None,
                           reward=_reward_spec(cfg), hyper=_hyper(cfg))
    backup = Backup(table=table, S=S, u_grid=u_grid(U_BOX, cfg.u_points))
    starts, digest = shared_initial_states(P, cfg.online_episodes, cfg.seed)
    res = run_online(model, P, agent, cfg.online_episodes, cfg.steps, sup, backup,
                     disturbance=W_BOX if disturbed else None, seed=cfg.seed, initial_states=starts)

    out = _out(cfg, f"online_{mode}")
    write_step_log(res, out / "steps.csv")
    write_timing(res, out / "timing.csv")
    save_agent(agent, out / "agent_after.weights")

    # post-online retest on a separate shared list, before vs after online learning
    test_starts, _ = shared_initial_states(P, cfg.test_episodes, cfg.seed + 1)
    W = W_BOX if disturbed else None
    rate_before = test_policy(model, before, P, len(test_starts), cfg.seed, cfg.steps, test_starts, W).failure_rate
    rate_after = test_policy(model, agent, P, len(test_starts), cfg.seed, cfg.steps, test_starts, W).failure_rate

    extra: dict = {"mode": mode, "state_hash": digest, "retest_before": rate_before, "retest_after": rate_after}
    if disturbed:
        draws = sample_many(P, P.bbox, np.random.default_rng(cfg.seed + 2), 2_000)
        extra["naive_witnesses"] = int(naive_witnesses(model, P, W_BOX, backup.u_grid, draws).shape[0])

    summary = RunSummary(
        name=f"online_{mode}",
        failure_rate=rate_after,
        episodes=len(res.episodes),
        violations=res.violations,
        fallback_count=res.fallback_count,
        updates_total=res.updates_total,
        hard_faults=0,
        timings_us=timing_quantiles(res),
        extra=extra,
    )
    _write_summary(summary, out / "summary.json")
    return summary


def cmd_verify_logs(cfg: ExperimentConfig) -> RunSummary:
    run_dir = Path(cfg.out_dir, f"online_{_online_mode(cfg)}")
    return verify_logs(run_dir / "steps.csv", run_dir / "summary.json", CSTRModel(_params(cfg)))


# -- econ --

def _econ_train_job(cfg: ExperimentConfig, P: HPolytope, variant: str) -> Path:
    model = CSTRModel(_params(cfg))
    tc = TrainConfig(
        episodes=cfg.episodes, steps_per_episode=cfg.steps, batch_episodes=cfg.batch_episodes,
        seed=cfg.seed, set=P, set_box=P.bbox, reward=_reward_spec(cfg, variant), hyper=_hyper(cfg),
        robust=cfg.robust, W=W_BOX if cfg.robust else None,
    )
    agent, curve = train_offline(model, tc)
    write_curve(curve, Path(cfg.out_dir, "econ", f"{variant}_curve.csv"))
    return save_agent(agent, Path(cfg.out_dir, "econ", f"{variant}.weights"))


def cmd_econ(cfg: ExperimentConfig) -> RunSummary:
    """Invariance vs Economic vs EconomicZone agents on matched initial states."""
    poly, grid = _set_files(cfg, cfg.robust)
    P = read_polytope(poly)
    S, table = read_gridded(grid)
    out = _out(cfg, "econ")
    for v in ECON_VARIANTS:
        validate_reward_spec(_reward_spec(cfg, v), P)

    jobs = [RunJob(v, _econ_train_job, {"cfg": cfg, "P": P, "variant": v}, cfg.job_timeout) for v in ECON_VARIANTS]
    outcomes = run_all(jobs, cfg.workers)
    failed = [o for o in outcomes if not o.ok]
    if failed:
        raise TrainingHaltedError(f"econ training failed: {[(o.name, o.error) for o in failed]}", None)

    model = CSTRModel(_params(cfg))
    starts, digest = shared_initial_states(P, cfg.econ_episodes, cfg.seed)
    # frozen agents, shielded: max_itr=0 means an unsafe mean goes straight to the backup
    sup = SupervisorConfig(max_itr=0, robust=cfg.robust, W=W_BOX if cfg.robust else None)
    backup = Backup(table=table, S=S, u_grid=u_grid(U_BOX, cfg.u_points))

    extra: dict = {"state_hash": digest}
    with (out / "econ.csv").open("w", newline="", encoding="utf-8") as f:
        table_w = csv.writer(f, lineterminator="\n")
        table_w.writerow(["variant", "le_mean", "le_std", "zone_penalty_mean"])
        for v, o in zip(ECON_VARIANTS, outcomes):
            agent = load_agent(o.result, X_BOX, U_BOX, _hyper(cfg))
            res = run_online(model, P, agent, len(starts), cfg.steps, sup, backup,
                             disturbance=W_BOX if cfg.robust else None, seed=cfg.seed,
                             initial_states=starts, explore=False)
            le, zone = [], []
            with (out / f"traj_{v}.csv").open("w", newline="", encoding="utf-8") as tf:
                tw = csv.writer(tf, lineterminator="\n")
                tw.writerow(["episode", "k", "cA", "T", "Tc"])
                for ep, records in enumerate(res.episodes):
                    X = successor_states(model, records)  # x_1 .. x_K
                    le.append(episode_economics(X))
                    zone.append(zone_violation(X))
                    for r in records:
                        tw.writerow([ep, r.k, repr(float(r.x[0])), repr(float(r.x[1])), repr(float(r.u_applied[0]))])
            row = (float(np.mean(le)), float(np.std(le)), float(np.mean(zone)))
            table_w.writerow([v, *(repr(x) for x in row)])
            extra[f"{v}_le_mean"], extra[f"{v}_le_std"], extra[f"{v}_zone_penalty_mean"] = row
            log.info(f"econ {v}: L_e {row[0]:.1f} +- {row[1]:.1f}, zone penalty {row[2]:.1f}")

    summary = RunSummary(name="econ", episodes=len(starts),
                         le_mean=extra["EconomicZone_le_mean"], le_std=extra["EconomicZone_le_std"],
                         zone_penalty_mean=extra["EconomicZone_zone_penalty_mean"], extra=extra)
    _write_summary(summary, out / "summary.json")
    return summary


# -- ssopt --

def cmd_ssopt(cfg: ExperimentConfig, use_box: bool = False) -> SteadyStateOptimum:
    """
    Best economic steady state inside the set: sweep Tc over U in 0.05 K steps, every guess
    per input, keep converged points inside P, maximize the economic stage.
    use_box swaps the polytope for the raw X box.
    """
    model = CSTRModel(_params(cfg))
    if use_box:
        P = box_to_polytope(X_BOX)
    else:
        poly, _ = _set_files(cfg, cfg.robust)
        P = read_polytope(poly)

    n_u = int(round((U_BOX.upper[0] - U_BOX.lower[0]) / SSOPT_STEP)) + 1
    best: tuple[float, np.ndarray, float] | None = None
    for u in np.linspace(U_BOX.lower[0], U_BOX.upper[0], n_u):
        for guess in SS_GUESSES:
            try:
                xs = steady_state(model, [u], guess)
            except ConvergenceError:
                continue
            if not contains(P, xs):
                continue
            le = economic_stage(xs)
            if best is None or le > best[0]:
                best = (le, xs, float(u))
    if best is None:
        raise NoFeasibleSteadyStateError("no steady state of any input lies inside the set")

    le, xs, u = best
    residual = float(np.max(np.abs(xs - model.phi(xs, [u]))))
    opt = SteadyStateOptimum(x_s=State.from_vec(xs), u_s=ControlInput(Tc=u), l_e=le, residual=residual)
    name = "ssopt_box.json" if use_box else "ssopt.json"
    (_out(cfg) / name).write_text(opt.model_dump_json(indent=2) + "\n", encoding="utf-8")
    log.info(f"ssopt: x_s=({xs[0]:.4f}, {xs[1]:.3f}) u_s={u:.2f} l_e={le:.1f}")
    return opt
