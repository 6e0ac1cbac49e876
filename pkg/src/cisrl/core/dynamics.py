# dynamics — RK4, fixed step, no surprises

"""
Discrete-time models x+ = phi(x, u) + G w.

phi is one classical RK4 step of the deterministic vector field over dt. The disturbance
enters after integration, scaled by G, so the map stays exactly linear in w. That linearity
is what lets the supervisor solve the worst case in closed form.

Everything here is pure: params are frozen, no hidden state, safe to call from any worker.
"""

import logging
from abc import ABC, abstractmethod
from typing import Callable, Literal

import numpy as np

from src.cisrl.core.errors import ConvergenceError, DimensionMismatchError, NumericOverflowError
from src.cisrl.core.geometry import BoxSet
from src.cisrl.core.models import ModelParams

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-9
NEWTON_MAX_ITER = 200
NEWTON_DAMPING = 0.5
RK4_STABILITY = 2.78  # real-axis extent of the classical RK4 stability region

X_BOX = BoxSet([0.0, 345.0], [1.0, 355.0])  # 0 <= cA <= 1, 345 <= T <= 355
U_BOX = BoxSet([285.0], [315.0])
W_BOX = BoxSet([-0.1, -2.0], [0.1, 2.0])  # feed concentration / feed temperature offsets


def rk4(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float, substeps: int = 1) -> np.ndarray:
    """Classical 4th-order fixed step. Works on (n,) or (N, n) since f is vectorized."""
    dt = h / substeps
    for _ in range(substeps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


class DiscreteModel(ABC):
    """Anything the synthesizer, trainer and supervisor can drive. n states, m inputs, d disturbances."""

    n: int
    m: int
    d: int
    linear_in_w: bool = True

    @property
    @abstractmethod
    def G(self) -> np.ndarray:
        """(n, d) disturbance gain of the discrete map."""
        ...

    @abstractmethod
    def phi_batch(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        """Deterministic successor for (N, n) states and (N, m) inputs."""
        ...

    def step_batch(self, X: np.ndarray, U: np.ndarray, Wd: np.ndarray | None = None) -> np.ndarray:
        nxt = self.phi_batch(X, U)
        if Wd is not None:
            nxt = nxt + Wd @ self.G.T
        return nxt

    def phi(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(1, -1)
        u = np.asarray(u, dtype=float).reshape(1, -1)
        if x.shape[1] != self.n or u.shape[1] != self.m:
            raise DimensionMismatchError(f"expected x in R^{self.n}, u in R^{self.m}, got {x.shape[1]}, {u.shape[1]}")
        return self.phi_batch(x, u)[0]

    def step(self, x, u, w=None) -> np.ndarray:
        """x+ = phi(x,u) + G w. w=None or zeros gives phi exactly."""
        nxt = self.phi(x, u)
        if w is None:
            return nxt
        w = np.asarray(w, dtype=float).reshape(-1)
        if w.shape[0] != self.d:
            raise DimensionMismatchError(f"disturbance dim {w.shape[0]}, model expects {self.d}")
        return nxt + self.G @ w

    def stable_at(self, x: np.ndarray) -> bool:
        """Whether the fixed-step map is trustworthy at x. Models override when they know better."""
        return True


def _finite_or_raise(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericOverflowError(f"non-finite {what}")
    return arr


class CSTRModel(DiscreteModel):
    """
    Exothermic first-order CSTR with a cooling jacket. State (cA, T), input Tc,
    disturbance (w_cA, w_T) added to the feed (cAf, Tf).

    disturbance_mode="discrete" (normative): x+ = RK4(x,u) + dt*(q/V)*w.
    disturbance_mode="continuous": w sits inside every RK4 stage. Not linear in w;
    only for cross-checking the discrete form.
    """

    n, m, d = 2, 1, 2

    def __init__(self, params: ModelParams | None = None,
                 disturbance_mode: Literal["discrete", "continuous"] = "discrete"):
        self.p = params or ModelParams()
        self.disturbance_mode = disturbance_mode
        self.linear_in_w = disturbance_mode == "discrete"
        p = self.p
        self._qv = p.q / p.V
        self._heat = p.dH_neg / (p.rho * p.cp)
        self._cool = p.UA / (p.V * p.rho * p.cp)
        self._G = p.dt * self._qv * np.eye(2)
        self._G.setflags(write=False)

    @property
    def G(self) -> np.ndarray:
        return self._G

    def rate(self, T):
        """Arrhenius k(T) in 1/min."""
        with np.errstate(over="ignore"):
            return self.p.k0 * np.exp(-self.p.E_over_R / T)

    def field(self, X: np.ndarray, Tc: np.ndarray, Wd: np.ndarray | None = None) -> np.ndarray:
        """Vectorized right-hand side, X (N,2), Tc (N,), Wd (N,2) or None."""
        cA, T = X[..., 0], X[..., 1]
        cAf = self.p.cAf if Wd is None else self.p.cAf + Wd[..., 0]
        Tf = self.p.Tf if Wd is None else self.p.Tf + Wd[..., 1]
        with np.errstate(over="ignore", invalid="ignore"):
            r = self.rate(T) * cA
            dc = self._qv * (cAf - cA) - r
            dT = self._qv * (Tf - T) + self._heat * r + self._cool * (Tc - T)
        return np.stack([dc, dT], axis=-1)

    def vector_field(self, x, u, w=None) -> np.ndarray:
        """(dcA/dt, dT/dt) in mol/(L min), K/min, with w added to cAf and Tf."""
        x = np.asarray(x, dtype=float).reshape(1, 2)
        Tc = np.asarray(u, dtype=float).reshape(1)
        Wd = None if w is None else np.asarray(w, dtype=float).reshape(1, 2)
        return _finite_or_raise(self.field(x, Tc, Wd)[0], "vector field")

    def integrate(self, x, u, w=None, dt: float | None = None, substeps: int = 1) -> np.ndarray:
        """Fine-step reference integration with w held inside the field (continuous form)."""
        X = np.asarray(x, dtype=float).reshape(1, 2)
        Tc = np.asarray(u, dtype=float).reshape(1)
        Wd = None if w is None else np.asarray(w, dtype=float).reshape(1, 2)
        out = rk4(lambda z: self.field(z, Tc, Wd), X, dt if dt is not None else self.p.dt, substeps)
        return _finite_or_raise(out[0], "integration result")

    def phi_batch(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        Tc = np.asarray(U, dtype=float).reshape(X.shape[0], -1)[:, 0]
        out = rk4(lambda z: self.field(z, Tc), np.asarray(X, dtype=float), self.p.dt)
        return _finite_or_raise(out, "successor state")

    def step_batch(self, X: np.ndarray, U: np.ndarray, Wd: np.ndarray | None = None) -> np.ndarray:
        if self.disturbance_mode == "discrete" or Wd is None:
            return super().step_batch(X, U, Wd)
        Tc = np.asarray(U, dtype=float).reshape(X.shape[0], -1)[:, 0]
        out = rk4(lambda z: self.field(z, Tc, Wd), np.asarray(X, dtype=float), self.p.dt)
        return _finite_or_raise(out, "successor state")

    def step(self, x, u, w=None) -> np.ndarray:
        if self.disturbance_mode == "discrete" or w is None:
            return super().step(x, u, w)
        return self.integrate(x, u, w)

    def stable_at(self, x: np.ndarray) -> bool:
        # stiffest real eigenvalue of the cA equation is about -(q/V + k(T))
        T = float(x[1])
        if not np.isfinite(T) or T <= 0.0:
            return False
        return (self._qv + float(self.rate(T))) * self.p.dt <= RK4_STABILITY


class LinearModel(DiscreteModel):
    """x+ = A x + B u + G w. Toy systems with analytic kernels live here."""

    def __init__(self, A, B, G=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.n = self.A.shape[0]
        self.m = self.B.shape[1]
        if self.B.shape[0] != self.n:
            raise DimensionMismatchError(f"B has {self.B.shape[0]} rows, A is {self.n}x{self.n}")
        self._G = np.eye(self.n) if G is None else np.atleast_2d(np.asarray(G, dtype=float))
        self.d = self._G.shape[1]

    @property
    def G(self) -> np.ndarray:
        return self._G

    def phi_batch(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.n)
        U = np.asarray(U, dtype=float).reshape(X.shape[0], self.m)
        return X @ self.A.T + U @ self.B.T


def vector_field(p: ModelParams, x, u, w=None) -> np.ndarray:
    return CSTRModel(p).vector_field(x, u, w)


def step(p: ModelParams, x, u, w=None) -> np.ndarray:
    return CSTRModel(p).step(x, u, w)


def _residual(model: DiscreteModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    return x - model.phi(x, u)


def _jacobian(model: DiscreteModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Central differences on the one-step residual. Step sized per coordinate."""
    n = x.shape[0]
    J = np.empty((n, n))
    for i in range(n):
        h = 1e-6 * max(1.0, abs(x[i]))
        e = np.zeros(n)
        e[i] = h
        J[:, i] = (_residual(model, x + e, u) - _residual(model, x - e, u)) / (2.0 * h)
    return J


def steady_state(model: DiscreteModel, u, x_guess) -> np.ndarray:
    """
    Damped Newton on r(x) = x - phi(x, u). Returns x_s with ||r||_inf <= 1e-9.
    Halves the step while the residual grows. Iterates outside the map's stable
    step region are rejected, so a bad guess fails loudly instead of landing on a
    spurious fixed point of the discretization.
    """
    x = np.asarray(x_guess, dtype=float).reshape(-1).copy()
    u = np.asarray(u, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ConvergenceError(f"non-finite guess {x}")

    for it in range(NEWTON_MAX_ITER):
        if not model.stable_at(x):
            raise ConvergenceError(f"iterate {x} outside the stable step region of the map (iter {it})")
        try:
            r = _residual(model, x, u)
            res = float(np.max(np.abs(r)))
            if res <= NEWTON_TOL:
                return x
            J = _jacobian(model, x, u)
            dx = np.linalg.solve(J, -r)
        except (NumericOverflowError, np.linalg.LinAlgError) as e:
            raise ConvergenceError(f"newton broke down at {x}: {e}") from e

        step_len = 1.0
        for _ in range(30):
            cand = x + step_len * dx
            if model.stable_at(cand):
                try:
                    if float(np.max(np.abs(_residual(model, cand, u)))) < res:
                        break
                except NumericOverflowError:
                    pass
            step_len *= NEWTON_DAMPING
        x = cand

    raise ConvergenceError(f"no convergence in {NEWTON_MAX_ITER} iterations (last x={x})")
