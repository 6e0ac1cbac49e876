# worst_case — the disturbance that hurts most, in closed form

"""
max over w in W of margin(P, phi(x,u) + G w).

The margin is a max of affine functions of w, so the optimum is the max over rows of
box-constrained linear programs, each attained at a sign-pattern vertex of W. That is exactly
the big-M mixed-integer program with one active row, without ever picking a value for M.

brute_force_worst_case enumerates every vertex; dense_grid_worst_case samples a lattice and
is the only option when the model is not linear in w (inexact there).
"""

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np

from src.cisrl.core.dynamics import DiscreteModel
from src.cisrl.core.errors import DimensionMismatchError
from src.cisrl.core.geometry import BoxSet, HPolytope, margin, margins

log = logging.getLogger(__name__)

CheckMode = Literal["nominal", "worst_case"]
GRID_POINTS = 41


@dataclass(frozen=True, eq=False)
class WorstCaseResult:
    J_star: float
    w_star: np.ndarray
    active_row: int


@dataclass(frozen=True, eq=False)
class Verdict:
    safe: bool
    J: float
    x_pred: np.ndarray
    w_star: np.ndarray | None = None


def _check_w(model: DiscreteModel, W: BoxSet) -> None:
    if W.n != model.d:
        raise DimensionMismatchError(f"W is {W.n}-D, model disturbance is {model.d}-D")


def worst_case_margin(model: DiscreteModel, P: HPolytope, x, u, W: BoxSet) -> WorstCaseResult:
    """Exact active-row decomposition. Ties go to the lowest row index."""
    _check_w(model, W)
    if not model.linear_in_w:
        log.warning("model is not linear in w, falling back to the dense grid (inexact)")
        return dense_grid_worst_case(model, P, x, u, W)

    phi = model.phi(x, u)
    if phi.shape[0] != P.n:
        raise DimensionMismatchError(f"state has dim {phi.shape[0]}, polytope has n={P.n}")
    AG = P.A @ model.G  # (c, d)
    rows = (P.A * phi).sum(axis=1) - P.b + np.abs(AG) @ W.half_width + AG @ W.center
    i = int(np.argmax(rows))
    w_star = np.where(AG[i] >= 0.0, W.upper, W.lower)
    J = margin(P, phi + model.G @ w_star)
    return WorstCaseResult(J_star=J, w_star=w_star, active_row=i)


def brute_force_worst_case(model: DiscreteModel, P: HPolytope, x, u, W: BoxSet) -> WorstCaseResult:
    """All 2^d vertices of W, every row. First vertex wins ties."""
    _check_w(model, W)
    phi = model.phi(x, u)
    verts = W.vertices()
    succ = phi[None, :] + verts @ model.G.T
    vals = margins(P, succ)
    k = int(np.argmax(vals))
    row_vals = (P.A * succ[k]).sum(axis=1) - P.b
    return WorstCaseResult(J_star=float(vals[k]), w_star=verts[k], active_row=int(np.argmax(row_vals)))


def dense_grid_worst_case(model: DiscreteModel, P: HPolytope, x, u, W: BoxSet,
                          points: int = GRID_POINTS) -> WorstCaseResult:
    """Lattice over W including its vertices. Uses the model's own step, so any w-coupling works."""
    _check_w(model, W)
    axes = [np.linspace(lo, hi, points) for lo, hi in zip(W.lower, W.upper)]
    Wg = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    u = np.asarray(u, dtype=float).reshape(1, -1)
    succ = model.step_batch(np.repeat(x, Wg.shape[0], axis=0), np.repeat(u, Wg.shape[0], axis=0), Wg)
    vals = margins(P, succ)
    k = int(np.argmax(vals))
    row_vals = (P.A * succ[k]).sum(axis=1) - P.b
    return WorstCaseResult(J_star=float(vals[k]), w_star=Wg[k], active_row=int(np.argmax(row_vals)))


def naive_witnesses(model: DiscreteModel, P: HPolytope, W: BoxSet, U_grid, states) -> np.ndarray:
    """
    (x, u) pairs the nominal check passes but the worst case fails: margin(phi) <= 0 < J*.
    Rows are [x..., u...]. Linear-in-w models only; vectorized over states and inputs.
    """
    _check_w(model, W)
    X = np.atleast_2d(np.asarray(states, dtype=float))
    U = np.atleast_2d(np.asarray(U_grid, dtype=float)).reshape(-1, model.m)
    Xr = np.repeat(X, U.shape[0], axis=0)
    Ur = np.tile(U, (X.shape[0], 1))
    phi = model.phi_batch(Xr, Ur)
    nominal = margins(P, phi)
    AG = P.A @ model.G
    rows = (phi[:, None, :] * P.A[None, :, :]).sum(axis=2) - P.b + np.abs(AG) @ W.half_width + AG @ W.center
    worst = rows.max(axis=1)
    hit = (nominal <= 0.0) & (worst > 0.0)
    return np.hstack([Xr[hit], Ur[hit]])


def check_action(model: DiscreteModel, P: HPolytope, x, u, mode: CheckMode = "nominal",
                 W: BoxSet | None = None) -> Verdict:
    """
    nominal: safe iff margin(P, phi(x,u)) <= 0.
    worst_case: safe iff J* <= 0; an unsafe verdict predicts with w*.
    """
    phi = model.phi(x, u)
    if mode == "nominal":
        J = margin(P, phi)
        return Verdict(safe=J <= 0.0, J=J, x_pred=phi)

    if W is None:
        raise ValueError("worst_case check needs W")
    res = worst_case_margin(model, P, x, u, W)
    if res.J_star <= 0.0:
        return Verdict(safe=True, J=res.J_star, x_pred=phi, w_star=res.w_star)
    return Verdict(safe=False, J=res.J_star, x_pred=model.step(x, u, res.w_star), w_star=res.w_star)
