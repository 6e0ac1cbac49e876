# geometry — inside means margin <= 0, boundary included

"""
H-representation polytopes {x : Ax - b <= 0} and axis-aligned boxes.
Membership, signed margin, uniform rejection sampling, and the few LP/vertex
helpers the synthesizer and supervisor need. Immutable after construction.
"""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from src.cisrl.core.errors import DegenerateSetError, DimensionMismatchError, PolytopeError

log = logging.getLogger(__name__)

MAX_DRAWS = 1_000_000
MIN_ACCEPTANCE = 1e-4
_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class BoxSet:
    """lower <= x <= upper componentwise. Houses X, U and W."""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatchError(f"box bounds shape mismatch: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise PolytopeError(f"box lower > upper: {lo} > {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def vertices(self) -> np.ndarray:
        """All 2^n corners, lowest-first lexicographic over (lower, upper) picks."""
        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True, eq=False)
class HPolytope:
    """
    {x : A x - b <= 0}. Validated on construction: c >= n+1, no zero rows, bounded.
    No redundancy removal, rows are used as given.
    """
    A: np.ndarray
    b: np.ndarray
    _bbox: BoxSet | None = field(default=None, repr=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise DimensionMismatchError(f"A has {A.shape[0]} rows, b has {b.shape[0]}")
        c, n = A.shape
        if c < n + 1:
            raise PolytopeError(f"need at least n+1={n + 1} constraints for a bounded set, got {c}")
        if np.any(np.all(A == 0.0, axis=1)):
            raise PolytopeError("zero row in A")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise PolytopeError("non-finite entries in A or b")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "_bbox", _support_box(A, b))

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def c(self) -> int:
        return self.A.shape[0]

    @property
    def bbox(self) -> BoxSet:
        return self._bbox


def _support_box(A: np.ndarray, b: np.ndarray) -> BoxSet:
    """Tight axis-aligned bounding box. Vertex enumeration in 2-D, LPs otherwise. Raises if unbounded/empty."""
    n = A.shape[1]
    if n == 2:
        verts = _vertices_2d(A, b)
        if verts.shape[0] == 0:
            raise PolytopeError("empty polytope (no feasible vertex)")
        lo, hi = verts.min(axis=0), verts.max(axis=0)
        # a bounded polygon has every direction supported; check via LP on the two axes
        for i in range(n):
            for sign in (1.0, -1.0):
                cvec = np.zeros(n)
                cvec[i] = sign
                res = linprog(cvec, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
                if res.status == 3:
                    raise PolytopeError(f"unbounded along axis {i}")
        return BoxSet(lo, hi)

    lo = np.empty(n)
    hi = np.empty(n)
    for i in range(n):
        for sign in (1.0, -1.0):
            cvec = np.zeros(n)
            cvec[i] = sign
            res = linprog(cvec, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
            if res.status == 3:
                raise PolytopeError(f"unbounded along axis {i}")
            if res.status != 0:
                raise PolytopeError(f"empty or ill-posed polytope (linprog status {res.status})")
            if sign > 0:
                lo[i] = res.fun
            else:
                hi[i] = -res.fun
    return BoxSet(lo, hi)


def _vertices_2d(A: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Pairwise row intersections that satisfy every row."""
    pts = []
    c = A.shape[0]
    scale = 1.0 + np.abs(b).max()
    for i in range(c):
        for j in range(i + 1, c):
            M = A[[i, j]]
            det = np.linalg.det(M)
            if abs(det) < 1e-14 * (np.abs(M).max() ** 2):
                continue
            v = np.linalg.solve(M, b[[i, j]])
            if np.all(A @ v - b <= tol * scale):
                pts.append(v)
    if not pts:
        return np.empty((0, 2))
    return np.unique(np.round(np.array(pts), 12), axis=0)


def vertices_2d(P: HPolytope) -> np.ndarray:
    if P.n != 2:
        raise DimensionMismatchError(f"vertex enumeration is 2-D only, got n={P.n}")
    return _vertices_2d(P.A, P.b)


def bounding_box(P: HPolytope) -> BoxSet:
    return P.bbox


def _check_dim(P: HPolytope, x: np.ndarray) -> None:
    if x.shape[-1] != P.n:
        raise DimensionMismatchError(f"state has dim {x.shape[-1]}, polytope has n={P.n}")


def margin(P: HPolytope, x) -> float:
    """max_i (A_i x - b_i). <= 0 iff x in P."""
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_dim(P, x)
    # elementwise product + sum, so it matches a plain per-row loop bit for bit
    return float(np.max((P.A * x).sum(axis=1) - P.b))


def margins(P: HPolytope, X) -> np.ndarray:
    """Row-wise margin for a batch (N, n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_dim(P, X)
    return np.max((X[:, None, :] * P.A[None, :, :]).sum(axis=2) - P.b, axis=1)


def contains(P: HPolytope, x) -> bool:
    """Closed set: boundary counts as inside."""
    return margin(P, x) <= 0.0


def box_to_polytope(bb: BoxSet) -> HPolytope:
    """2n rows: x_i - upper_i <= 0 then -x_i + lower_i <= 0."""
    n = bb.n
    A = np.vstack([np.eye(n), -np.eye(n)])
    b = np.concatenate([bb.upper, -bb.lower])
    return HPolytope(A, b)


def scaled(P: HPolytope, s: float, about: np.ndarray) -> HPolytope:
    """Shrink (s<1) or inflate (s>1) P toward/away from a point: about + s (P - about)."""
    about = np.asarray(about, dtype=float)
    Ac = P.A @ about
    return HPolytope(P.A, Ac + s * (P.b - Ac))


def sample_uniform(P: HPolytope, bb: BoxSet, rng: np.random.Generator) -> np.ndarray:
    """One uniform draw from P by rejection from uniform-on-bb."""
    if bb.n != P.n:
        raise DimensionMismatchError(f"box dim {bb.n} vs polytope n={P.n}")
    for _ in range(MAX_DRAWS):
        x = rng.uniform(bb.lower, bb.upper)
        if margin(P, x) <= 0.0:
            return x
    raise DegenerateSetError(f"no acceptance in {MAX_DRAWS} draws")


def sample_many(P: HPolytope, bb: BoxSet, rng: np.random.Generator, count: int) -> np.ndarray:
    """count uniform draws from P, chunked rejection. Raises on acceptance rate < 1e-4."""
    if bb.n != P.n:
        raise DimensionMismatchError(f"box dim {bb.n} vs polytope n={P.n}")
    out = np.empty((count, P.n))
    got = 0
    draws = 0
    while got < count:
        cand = rng.uniform(bb.lower, bb.upper, size=(_CHUNK, P.n))
        draws += _CHUNK
        ok = cand[margins(P, cand) <= 0.0]
        take = min(ok.shape[0], count - got)
        out[got:got + take] = ok[:take]
        got += take
        if draws >= MAX_DRAWS and got / draws < MIN_ACCEPTANCE:
            raise DegenerateSetError(f"acceptance {got}/{draws} below {MIN_ACCEPTANCE}")
    return out
