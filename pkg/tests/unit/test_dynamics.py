# test_dynamics — the plant has to be right before anything else is

"""
CSTR right-hand side, the RK4 map, disturbance injection and the steady-state solver.
Run with: pytest tests/unit/test_dynamics.py -v
"""

import math

import numpy as np
import pytest

from src.cisrl.core.dynamics import (
    X_BOX,
    CSTRModel,
    LinearModel,
    rk4,
    steady_state,
    step,
    vector_field,
)
from src.cisrl.core.errors import ConvergenceError, DimensionMismatchError, NumericOverflowError
from src.cisrl.core.models import ModelParams


def _rhs_by_hand(x, Tc, p=ModelParams()):
    cA, T = x
    k = p.k0 * math.exp(-p.E_over_R / T)
    dc = p.q / p.V * (p.cAf - cA) - k * cA
    dT = p.q / p.V * (p.Tf - T) + p.dH_neg / (p.rho * p.cp) * k * cA + p.UA / (p.V * p.rho * p.cp) * (Tc - T)
    return np.array([dc, dT])


def test_zero_concentration_only_feed_drives_ca():
    """cA=0 -> reaction term vanishes, dcA/dt = q/V cAf"""
    f = vector_field(ModelParams(), [0.0, 350.0], [300.0])
    assert f[0] == pytest.approx(1.0)


def test_balanced_temperature_has_zero_dT():
    """cA=0, T=Tf=Tc -> every temperature term cancels"""
    f = vector_field(ModelParams(), [0.0, 350.0], [350.0])
    assert f[1] == pytest.approx(0.0, abs=1e-12)


def test_near_steady_point_matches_hand_evaluation():
    """(0.5, 350) with Tc=300 sits close to a steady state"""
    f = vector_field(ModelParams(), [0.5, 350.0], [300.0])
    expect = _rhs_by_hand((0.5, 350.0), 300.0)
    assert np.allclose(f, expect, rtol=1e-12, atol=1e-12)
    assert abs(f[0]) < 1e-4
    assert abs(f[1]) < 1e-2


def test_disturbance_shifts_feed():
    """w adds to cAf and Tf inside the field"""
    m = CSTRModel()
    f0 = m.vector_field([0.0, 350.0], [350.0])
    f1 = m.vector_field([0.0, 350.0], [350.0], [0.1, 2.0])
    assert f1[0] - f0[0] == pytest.approx(0.1)
    assert f1[1] - f0[1] == pytest.approx(2.0)


def test_overflow_raises():
    """negative temperature makes the Arrhenius term explode"""
    with pytest.raises(NumericOverflowError):
        vector_field(ModelParams(), [0.5, -1e-3], [300.0])


def test_zero_w_equals_deterministic_step():
    m = CSTRModel()
    x, u = [0.5, 350.0], [300.0]
    assert np.array_equal(m.step(x, u, [0.0, 0.0]), m.phi(x, u))
    assert np.array_equal(step(ModelParams(), x, u), m.phi(x, u))


def test_step_is_small_and_matches_fine_integration():
    """one 6 s step near steady state moves little and agrees with dt/100 integration"""
    m = CSTRModel()
    x = np.array([0.5, 350.0])
    nxt = m.step(x, [300.0])
    assert abs(nxt[0] - x[0]) < 1e-3
    assert abs(nxt[1] - x[1]) < 0.1
    fine = m.integrate(x, [300.0], substeps=100)
    assert np.allclose(nxt, fine, rtol=0, atol=1e-6)


def test_discrete_disturbance_is_linear():
    """x+ = phi + G w with G = dt q/V I"""
    m = CSTRModel()
    x, u, w = [0.5, 350.0], [300.0], np.array([0.1, -2.0])
    assert np.allclose(m.G, 0.1 * np.eye(2))
    assert np.allclose(m.step(x, u, w), m.phi(x, u) + 0.1 * w, rtol=0, atol=1e-12)


def test_continuous_mode_is_close_to_discrete():
    """w inside the stages differs from additive w by O(dt^2) only"""
    disc = CSTRModel()
    cont = CSTRModel(disturbance_mode="continuous")
    assert not cont.linear_in_w
    x, u, w = [0.5, 350.0], [300.0], [0.1, 2.0]
    gap = np.abs(disc.step(x, u, w) - cont.step(x, u, w))
    assert gap[0] < 1e-2 and gap[1] < 0.5


def test_batch_matches_single():
    m = CSTRModel()
    X = np.array([[0.2, 346.0], [0.5, 350.0], [0.8, 354.0]])
    U = np.array([[290.0], [300.0], [310.0]])
    batch = m.phi_batch(X, U)
    for i in range(3):
        assert np.allclose(batch[i], m.phi(X[i], U[i]), rtol=0, atol=1e-12)


def test_dimension_mismatch():
    m = CSTRModel()
    with pytest.raises(DimensionMismatchError):
        m.phi([0.5, 350.0, 1.0], [300.0])
    with pytest.raises(DimensionMismatchError):
        m.step([0.5, 350.0], [300.0], [0.1])


def test_rk4_exact_on_linear_decay():
    """x' = -x, one step of 0.1 against the degree-4 Taylor polynomial"""
    h = 0.1
    out = rk4(lambda z: -z, np.array([1.0]), h)
    assert out[0] == pytest.approx(1 - h + h**2 / 2 - h**3 / 6 + h**4 / 24, abs=1e-14)


def test_linear_model_step():
    lin = LinearModel([[2.0]], [[1.0]])
    assert lin.n == 1 and lin.m == 1 and lin.d == 1
    assert lin.step([0.5], [-1.0]) == pytest.approx([0.0])
    assert lin.step([0.5], [-1.0], [0.25]) == pytest.approx([0.25])


def test_linear_model_rejects_bad_B():
    with pytest.raises(DimensionMismatchError):
        LinearModel(np.eye(2), [[1.0]])


def test_steady_state_converges():
    """u=300 from (0.5, 350): residual by direct substitution"""
    m = CSTRModel()
    xs = steady_state(m, [300.0], [0.5, 350.0])
    assert np.max(np.abs(xs - m.phi(xs, [300.0]))) <= 1e-9
    assert X_BOX.contains(xs)


def test_steady_state_is_field_zero():
    """fixed point of the RK4 map is a zero of the continuous field"""
    m = CSTRModel()
    xs = steady_state(m, [300.0], [0.5, 350.0])
    assert np.allclose(m.vector_field(xs, [300.0]), 0.0, atol=1e-6)


def test_steady_state_divergent_guess_fails_loudly():
    """(0, 600) is far outside the stable step region, no silent wrong answer"""
    with pytest.raises(ConvergenceError):
        steady_state(CSTRModel(), [300.0], [0.0, 600.0])


def test_stable_at():
    m = CSTRModel()
    assert m.stable_at(np.array([0.5, 350.0]))
    assert not m.stable_at(np.array([0.0, 600.0]))
    assert not m.stable_at(np.array([0.5, -1.0]))


def _stiffness(cstr, x, u) -> float:
    """spectral radius of the vector field's Jacobian, times dt"""
    J = np.empty((2, 2))
    for i in range(2):
        h = 1e-6 * max(1.0, abs(x[i]))
        e = np.zeros(2)
        e[i] = h
        J[:, i] = (cstr.vector_field(x + e, u) - cstr.vector_field(x - e, u)) / (2.0 * h)
    return float(np.max(np.abs(np.linalg.eigvals(J)))) * cstr.p.dt


def test_rk4_is_fourth_order_on_the_plant(cstr):
    """
    one step vs two half steps against a 1000-substep reference: every error ratio in [8, 32].
    States where |eig|*dt > 0.6 (the runaway corner, high cA and T) are outside RK4's
    asymptotic regime and are skipped.
    """
    rng = np.random.default_rng(11)
    ratios = []
    for _ in range(10_000):
        x = rng.uniform(X_BOX.lower, X_BOX.upper)
        u = rng.uniform(285.0, 315.0, size=1)
        if _stiffness(cstr, x, u) > 0.6:
            continue
        exact = cstr.integrate(x, u, substeps=1_000)
        one = np.linalg.norm(cstr.integrate(x, u) - exact)
        two = np.linalg.norm(cstr.integrate(x, u, substeps=2) - exact)
        ratios.append(one / two)
        if len(ratios) == 100:
            break
    assert len(ratios) == 100
    ratios = np.array(ratios)
    assert np.all((ratios >= 8.0) & (ratios <= 32.0)), ratios[(ratios < 8.0) | (ratios > 32.0)]
