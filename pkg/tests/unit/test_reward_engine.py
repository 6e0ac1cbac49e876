# test_reward_engine — what each variant pays

"""
Membership-gated rewards, stage costs, and the spec sweep that guards r2.
Run with: pytest tests/unit/test_reward_engine.py -v
"""

import numpy as np
import pytest
from pydantic import ValidationError

from src.cisrl.core.dynamics import X_BOX
from src.cisrl.core.errors import RewardSpecError
from src.cisrl.core.geometry import box_to_polytope
from src.cisrl.core.models import RewardSpec
from src.cisrl.rl.reward_engine import (
    economic_stage,
    episode_economics,
    graded_penalty,
    reward,
    safe_reward,
    validate_reward_spec,
    zone_stage,
    zone_violation,
)

X = np.array([0.5, 350.0])


def test_invariance_inside():
    assert reward(RewardSpec(), X, True, X) == 10_000.0


def test_invariance_outside():
    assert reward(RewardSpec(), X, False, X) == -1_000.0


def test_outside_is_r2_for_every_variant():
    for variant in ("Economic", "EconomicZone", "Zone"):
        spec = RewardSpec(variant=variant, r2=-5_000.0)
        assert reward(spec, X, False, X) == -5_000.0


def test_setpoint_zero_at_target():
    spec = RewardSpec(variant="SetPoint", x_s=(0.5, 350.0))
    assert reward(spec, X, True, X) == 0.0


def test_setpoint_distance():
    """p=2, q=2 -> squared euclidean distance, negated"""
    spec = RewardSpec(variant="SetPoint", x_s=(0.5, 350.0))
    assert safe_reward(spec, [0.5, 353.0]) == pytest.approx(-9.0)


def test_setpoint_needs_target():
    with pytest.raises(ValidationError):
        RewardSpec(variant="SetPoint")


def test_invariance_needs_r1_above_r2():
    with pytest.raises(ValidationError):
        RewardSpec(r1=-2_000.0, r2=-1_000.0)


@pytest.mark.parametrize("cA,expected", [(1.0, 0.0), (0.0, 10_000.0), (0.41, 5_900.0)])
def test_economic_stage(cA, expected):
    assert economic_stage([cA, 350.0]) == pytest.approx(expected)


@pytest.mark.parametrize("T,expected", [(350.0, 0.0), (347.0, -300.0), (353.0, -300.0), (348.0, 0.0)])
def test_zone_stage(T, expected):
    assert zone_stage(T) == pytest.approx(expected)


def test_economic_zone_adds_both():
    spec = RewardSpec(variant="EconomicZone", r2=-3_000.0)
    assert safe_reward(spec, [0.41, 347.0]) == pytest.approx(5_900.0 - 300.0)


def test_zone_distance_variant():
    spec = RewardSpec(variant="Zone")
    assert safe_reward(spec, [0.5, 350.0]) == 0.0
    assert safe_reward(spec, [0.5, 354.0]) == pytest.approx(-4.0)


def test_episode_economics():
    assert episode_economics(np.tile([1.0, 350.0], (200, 1))) == 0.0
    assert episode_economics(np.tile([0.0, 350.0], (200, 1))) == pytest.approx(2_000_000.0)


def test_episode_economics_empty():
    with pytest.raises(ValueError):
        episode_economics(np.empty((0, 2)))


def test_zone_violation_integral():
    states = np.array([[0.5, 350.0], [0.5, 347.0], [0.5, 353.0]])
    assert zone_violation(states) == pytest.approx(600.0)


def test_validate_accepts_stock_specs():
    P = box_to_polytope(X_BOX)
    assert validate_reward_spec(RewardSpec(), P) == 10_000.0
    assert validate_reward_spec(RewardSpec(variant="Economic"), P) >= 0.0
    # worst zone stage over X is -300 * 3^2 = -2700, so -3000 clears it
    worst = validate_reward_spec(RewardSpec(variant="EconomicZone", r2=-3_000.0), P)
    assert worst == pytest.approx(-2_700.0)


def test_validate_rejects_low_r2_headroom():
    """EconomicZone with the stock r2 can pay less than r2 at the T corners"""
    P = box_to_polytope(X_BOX)
    with pytest.raises(RewardSpecError):
        validate_reward_spec(RewardSpec(variant="EconomicZone", r2=-1_000.0), P)


def test_graded_penalty_orders_unsafe_inputs():
    spec = RewardSpec()
    assert graded_penalty(spec, 0.0, 10.0) == spec.r2
    assert graded_penalty(spec, -3.0, 10.0) == spec.r2
    near, far = graded_penalty(spec, 0.5, 10.0), graded_penalty(spec, 4.0, 10.0)
    assert spec.r2 > near > far >= 2 * spec.r2
    assert graded_penalty(spec, 1e9, 10.0) == pytest.approx(2 * spec.r2)


def test_graded_penalty_stays_below_safe_rewards():
    spec = RewardSpec(variant="Economic", r2=0.0)
    assert graded_penalty(spec, 2.0, 1.0) < 0.0 <= economic_stage([0.4, 350.0])
    with pytest.raises(ValueError):
        graded_penalty(spec, 1.0, 0.0)
