# test_acceptance — the desk-scale study, gated on direction not decimals

"""
Full-resolution runs: 200x200 sets, stock episode budgets. Minutes to an hour, so they only
run when asked for.
Run with: pytest tests/integration/test_acceptance.py -v -m slow
"""

import csv

import numpy as np
import pytest

from src.cisrl.core.dynamics import U_BOX, W_BOX, CSTRModel
from src.cisrl.core.geometry import sample_many
from src.cisrl.core.models import ExperimentConfig
from src.cisrl.core.set_store import read_gridded, read_polytope
from src.cisrl.services import harness
from src.cisrl.services.worst_case import brute_force_worst_case, dense_grid_worst_case, worst_case_margin

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    cfg = ExperimentConfig(out_dir=tmp_path_factory.mktemp("study"))
    summary = harness.cmd_synth(cfg)
    return cfg, summary.extra


def _cfg(study, **changes) -> ExperimentConfig:
    cfg, _ = study
    return cfg.model_copy(update=changes)


def test_sets_verify_with_no_counterexamples(study):
    _, stats = study
    assert stats["cis_counterexamples"] == 0
    assert stats["rcis_counterexamples"] == 0
    assert stats["rcis_subset_of_cis"] == "true"


def test_worst_case_exact_on_ten_thousand_pairs(study):
    cfg, _ = study
    model = CSTRModel()
    P = read_polytope(cfg.out_dir / "rcis.poly")
    rng = np.random.default_rng(0)
    X = sample_many(P, P.bbox, rng, 10_000)
    U = rng.uniform(U_BOX.lower, U_BOX.upper, size=(10_000, 1))
    worst = 0.0
    for x, u in zip(X, U):
        fast = worst_case_margin(model, P, x, u, W_BOX).J_star
        worst = max(worst, abs(fast - brute_force_worst_case(model, P, x, u, W_BOX).J_star))
    assert worst <= 1e-9
    for x, u in zip(X[:200], U[:200]):
        fast = worst_case_margin(model, P, x, u, W_BOX).J_star
        assert dense_grid_worst_case(model, P, x, u, W_BOX).J_star == pytest.approx(fast, abs=1e-6)


def test_naive_check_is_unsound_somewhere(study):
    summary = harness.cmd_online(_cfg(study, mode="naive", online_episodes=50))
    assert summary.extra["naive_witnesses"] >= 1


def test_deterministic_online_never_leaves(study):
    summary = harness.cmd_online(_cfg(study, mode="deterministic", online_episodes=500, max_itr=20))
    assert summary.violations == 0
    assert summary.hard_faults == 0


def test_robust_online_never_leaves(study):
    summary = harness.cmd_online(_cfg(study, mode="robust", robust=True, online_episodes=300))
    assert summary.violations == 0


def test_steady_state_optimum(study):
    opt = harness.cmd_ssopt(_cfg(study))
    assert opt.x_s.cA == pytest.approx(0.41, abs=0.05)
    assert opt.x_s.T == pytest.approx(354.98, abs=0.5)
    assert opt.u_s.Tc == pytest.approx(298.68, abs=2.0)
    assert opt.residual <= 1e-9


def test_backup_inputs_hold_the_robust_grid(study):
    cfg, _ = study
    model = CSTRModel()
    S, table = read_gridded(cfg.out_dir / "rcis_grid.txt")
    rng = np.random.default_rng(3)
    pick = rng.choice(len(table), size=min(1_000, len(table)), replace=False)
    for i in pick:
        x = S.grid.center(int(table.cells[i]))
        for w in np.vstack([np.zeros(2), W_BOX.vertices()]):
            assert S.contains(model.step(x, table.inputs[i], w))


def test_training_with_the_set_fails_less(study):
    summary = harness.cmd_train(_cfg(study, seeds=[0, 1, 2], episodes=2_000))
    with (_cfg(study).out_dir / "test" / "failure_rates.csv").open() as f:
        rows = list(csv.DictReader(f))
    by = {(r["variant"], r["seed"]): float(r["failure_rate"]) for r in rows}
    for s in ("0", "1", "2"):
        assert by[("cis", s)] < by[("nocis", s)], f"seed {s} reversed"
    assert summary.extra["cis_mean_failure"] < summary.extra["nocis_mean_failure"]
    # learning progress on the guided agents
    for s in (0, 1, 2):
        assert summary.extra[f"cis_seed{s}_final_avg"] > summary.extra[f"cis_seed{s}_first_avg"]


def test_economic_rewards_pay_off(study):
    summary = harness.cmd_econ(_cfg(study, econ_episodes=100))
    e = summary.extra
    assert e["Economic_le_mean"] > e["Invariance_le_mean"]
    assert e["EconomicZone_le_mean"] > e["Invariance_le_mean"]
    assert e["EconomicZone_zone_penalty_mean"] < e["Economic_zone_penalty_mean"]


def test_cis_spans_the_temperature_range(study):
    """full T band, cA only part of [0, 1]"""
    cfg, _ = study
    S, _ = read_gridded(cfg.out_dir / "cis_grid.txt")
    C = S.member_centers()
    half = 0.5 * S.grid.cell_width
    assert C[:, 1].min() - half[1] <= 345.0 + 1e-9
    assert C[:, 1].max() + half[1] >= 355.0 - 1e-9
    bb = read_polytope(cfg.out_dir / "cis.poly").bbox
    assert bb.lower[1] <= 345.5 and bb.upper[1] >= 354.5
    assert 0.0 <= bb.lower[0] < bb.upper[0] <= 1.0
    assert bb.lower[0] > 0.01 or bb.upper[0] < 0.99
