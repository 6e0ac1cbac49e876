# cis_synth — carve the safe region out of a grid, one sweep at a time

"""
Grid viability kernel for control invariant sets, deterministic or robust.

A cell survives a sweep when some input in U_grid sends its center, under every disturbance
vertex and w=0, into a cell whose whole 3^n neighbourhood is still in the set. That one-cell
erosion is the margin slack: it keeps the gridded set an inner approximation even though we
only certify cell centers. Successors outside the grid box count as outside.

Then the hull of the surviving centers becomes an H-polytope, shrunk toward its centroid until
a sampled invariance check comes back clean.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from src.cisrl.adapters.metrics_client import synth_sweeps_total
from src.cisrl.config import settings
from src.cisrl.core.dynamics import DiscreteModel
from src.cisrl.core.errors import (
    DegenerateSetError,
    DimensionMismatchError,
    EmptyKernelError,
    EmptyTableError,
    ExtractionError,
)
from src.cisrl.core.geometry import BoxSet, HPolytope, margins, sample_many, scaled

log = logging.getLogger(__name__)

MIN_RESOLUTION = 8
SHRINK_STEP_PCT = 1
SHRINK_FLOOR_PCT = 50
_VERIFY_CHUNK = 256
_SYNTH_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class Grid:
    """Cells of equal size over a box. Flat indices are C-order over the per-axis cell numbers."""
    box: BoxSet
    resolution: tuple[int, ...]

    def __post_init__(self):
        res = tuple(int(r) for r in np.atleast_1d(self.resolution))
        if len(res) != self.box.n:
            raise DimensionMismatchError(f"resolution has {len(res)} entries, box is {self.box.n}-D")
        if min(res) < MIN_RESOLUTION:
            raise ValueError(f"need at least {MIN_RESOLUTION} cells per axis, got {res}")
        if np.any(self.box.widths <= 0.0):
            raise ValueError("grid box has zero width along some axis")
        object.__setattr__(self, "resolution", res)

    @property
    def n(self) -> int:
        return self.box.n

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def cell_width(self) -> np.ndarray:
        return self.box.widths / np.asarray(self.resolution, dtype=float)

    def centers(self) -> np.ndarray:
        """(n_cells, n) cell midpoints in flat-index order."""
        axes = [
            self.box.lower[i] + (np.arange(r) + 0.5) * self.cell_width[i]
            for i, r in enumerate(self.resolution)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def center(self, idx: int) -> np.ndarray:
        sub = np.unravel_index(int(idx), self.resolution)
        return self.box.lower + (np.asarray(sub, dtype=float) + 0.5) * self.cell_width

    def cell_of(self, X) -> np.ndarray:
        """Flat cell index per row, -1 outside the closed box. Upper faces belong to the last cell."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        res = np.asarray(self.resolution)
        with np.errstate(invalid="ignore"):
            inside = np.all((X >= self.box.lower) & (X <= self.box.upper), axis=1)
            sub = np.floor((X - self.box.lower) / self.cell_width)
        sub = np.clip(np.nan_to_num(sub, nan=0.0), 0, res - 1).astype(np.int64)
        flat = np.ravel_multi_index(tuple(sub.T), self.resolution)
        return np.where(inside, flat, -1)


@dataclass(eq=False)
class GriddedSet:
    grid: Grid
    member: np.ndarray  # bool, shape grid.resolution
    trace: list[int] = field(default_factory=list)  # member count after each sweep

    @property
    def count(self) -> int:
        return int(self.member.sum())

    def member_indices(self) -> np.ndarray:
        return np.flatnonzero(self.member.ravel())

    def member_centers(self) -> np.ndarray:
        return self.grid.centers()[self.member.ravel()]

    def contains(self, x) -> bool:
        idx = int(self.grid.cell_of(x)[0])
        return idx >= 0 and bool(self.member.ravel()[idx])


@dataclass(eq=False)
class BackupTable:
    """Certified input per member cell. cells sorted ascending, inputs row-aligned."""
    cells: np.ndarray
    inputs: np.ndarray

    def __len__(self) -> int:
        return int(self.cells.shape[0])

    def get(self, cell: int) -> np.ndarray | None:
        pos = int(np.searchsorted(self.cells, cell))
        if pos < len(self) and self.cells[pos] == cell:
            return self.inputs[pos]
        return None


@dataclass
class InvarianceReport:
    n_samples: int
    counterexamples: np.ndarray  # (k, n) states with no certifying input

    @property
    def passed(self) -> bool:
        return self.counterexamples.shape[0] == 0


def u_grid(U: BoxSet, points: int = 61) -> np.ndarray:
    """Evenly spaced inputs over a 1-D input box, shape (points, 1)."""
    if U.n != 1:
        raise DimensionMismatchError(f"u_grid only spans 1-D input boxes, got {U.n}-D")
    return np.linspace(U.lower[0], U.upper[0], points).reshape(-1, 1)


def _disturbance_points(model: DiscreteModel, W_vertices) -> np.ndarray:
    """W_vertices plus w=0, as (V, d). Empty W gives just the zero row."""
    zero = np.zeros((1, model.d))
    if W_vertices is None or len(W_vertices) == 0:
        return zero
    W = np.atleast_2d(np.asarray(W_vertices, dtype=float))
    if W.shape[1] != model.d:
        raise DimensionMismatchError(f"disturbance vertices are {W.shape[1]}-D, model expects {model.d}")
    return np.vstack([zero, W])


def _successors(model: DiscreteModel, X: np.ndarray, U: np.ndarray, Wpts: np.ndarray) -> np.ndarray:
    """All successors, shape (N, K, V, n)."""
    N, K, V = X.shape[0], U.shape[0], Wpts.shape[0]
    Xr = np.repeat(X, K, axis=0)
    Ur = np.tile(U, (N, 1))
    if model.linear_in_w:
        nominal = model.phi_batch(Xr, Ur)
        out = nominal[:, None, :] + (Wpts @ model.G.T)[None, :, :]
    else:
        out = np.stack([
            model.step_batch(Xr, Ur, np.broadcast_to(w, (Xr.shape[0], model.d)))
            for w in Wpts
        ], axis=1)
    return out.reshape(N, K, V, model.n)


def _safe_inputs(succ_idx: np.ndarray, eroded: np.ndarray) -> np.ndarray:
    """(N, K) bool, True where every disturbance lands in the eroded set."""
    ext = np.append(eroded, False)  # index -1 reads the appended False
    return np.all(ext[succ_idx], axis=2)


def synthesize(model: DiscreteModel, X: BoxSet, U_grid, W_vertices, grid: Grid,
               max_sweeps: int | None = None) -> tuple[GriddedSet, BackupTable]:
    """
    Fixed-point viability iteration from S_0 = every cell.
    Returns the surviving set and the first certifying input (U_grid order) per member.
    """
    U = np.atleast_2d(np.asarray(U_grid, dtype=float))
    if U.shape[0] == 0:
        raise ValueError("U_grid is empty")
    if U.shape[1] != model.m:
        U = U.reshape(-1, model.m)
    if grid.n != model.n or X.n != model.n:
        raise DimensionMismatchError(f"grid/X dimension vs model n={model.n}")

    Wpts = _disturbance_points(model, W_vertices)
    centers = grid.centers()
    N, K, V = centers.shape[0], U.shape[0], Wpts.shape[0]

    succ_idx = np.empty((N, K, V), dtype=np.int32)
    for start in range(0, N, _SYNTH_CHUNK):
        block = centers[start:start + _SYNTH_CHUNK]
        flat = _successors(model, block, U, Wpts).reshape(-1, model.n)
        # successors must stay in X as well as inside the grid box
        idx = grid.cell_of(flat)
        idx[~np.all((flat >= X.lower) & (flat <= X.upper), axis=1)] = -1
        succ_idx[start:start + block.shape[0]] = idx.reshape(block.shape[0], K, V)

    # cell centers themselves must satisfy X
    member = np.all((centers >= X.lower) & (centers <= X.upper), axis=1)
    structure = np.ones((3,) * grid.n, dtype=bool)
    trace = [int(member.sum())]
    log.info(f"synthesis start: {N} cells, {K} inputs, {V} disturbance points")

    sweeps = 0
    while True:
        eroded = ndimage.binary_erosion(member.reshape(grid.resolution), structure=structure,
                                        border_value=0).ravel()
        new = member & np.any(_safe_inputs(succ_idx, eroded), axis=1)
        sweeps += 1
        if settings.metrics_enabled:
            synth_sweeps_total.inc()
        trace.append(int(new.sum()))
        log.debug(f"sweep {sweeps}: {trace[-1]} members")
        if trace[-1] == 0:
            log.error(f"kernel emptied after {sweeps} sweeps")
            raise EmptyKernelError(f"viability kernel is empty after {sweeps} sweeps", trace)
        if np.array_equal(new, member):
            break
        member = new
        if max_sweeps is not None and sweeps >= max_sweeps:
            log.warning(f"stopped at max_sweeps={max_sweeps} before the fixed point")
            break

    eroded = ndimage.binary_erosion(member.reshape(grid.resolution), structure=structure,
                                    border_value=0).ravel()
    cells = np.flatnonzero(member)
    safe = _safe_inputs(succ_idx[cells], eroded)
    first = np.argmax(safe, axis=1)
    table = BackupTable(cells=cells.astype(np.int64), inputs=U[first].copy())

    log.info(f"synthesis done: {member.sum()} of {N} cells after {sweeps} sweeps")
    return GriddedSet(grid, member.reshape(grid.resolution), trace), table


def _hull_polytope(S: GriddedSet) -> tuple[HPolytope, np.ndarray]:
    """H-rep of the hull of member centers, plus their mean as the shrink anchor."""
    pts = S.member_centers()
    anchor = pts.mean(axis=0)
    if S.grid.n == 1:
        A = np.array([[1.0], [-1.0]])
        b = np.array([pts.max(), -pts.min()])
        if b[0] + b[1] <= 0.0:
            raise DegenerateSetError("1-D set collapsed to a point")
        return HPolytope(A, b), anchor

    lo, w = S.grid.box.lower, S.grid.box.widths
    try:
        hull = ConvexHull((pts - lo) / w)
    except QhullError as e:
        raise DegenerateSetError(f"member centers are flat, no full-dimensional hull: {e}") from e
    normals, offsets = hull.equations[:, :-1], hull.equations[:, -1]
    # back to state coordinates, unit-norm rows
    A = normals / w
    b = (normals * (lo / w)).sum(axis=1) - offsets
    norms = np.linalg.norm(A, axis=1)
    return HPolytope(A / norms[:, None], b / norms), anchor


def extract_polytope(S: GriddedSet, model: DiscreteModel, U_grid, W_vertices,
                     n_samples: int = 10_000, seed: int = 0) -> HPolytope:
    """Hull of the member centers, shrunk 1% at a time until verify_invariance is clean."""
    if S.count == 0:
        raise EmptyKernelError("cannot extract from an empty set", S.trace)
    P, anchor = _hull_polytope(S)
    log.info(f"hull has {P.c} rows")

    for pct in range(100, SHRINK_FLOOR_PCT - 1, -SHRINK_STEP_PCT):
        cand = P if pct == 100 else scaled(P, pct / 100.0, anchor)
        report = verify_invariance(cand, model, U_grid, W_vertices, n_samples,
                                   rng=np.random.default_rng(seed), cell_width=S.grid.cell_width)
        if report.passed:
            log.info(f"extraction passed at shrink factor {pct}%")
            return cand
        log.debug(f"shrink {pct}%: {report.counterexamples.shape[0]} counterexamples")

    raise ExtractionError(
        f"no invariant polytope down to {SHRINK_FLOOR_PCT}% shrink; set is likely non-convex, "
        "use gridded membership instead"
    )


def _near_boundary(P: HPolytope, X: np.ndarray, cell_width: np.ndarray) -> np.ndarray:
    slack = P.b - X @ P.A.T  # (N, c), >= 0 inside
    band = np.abs(P.A) @ cell_width  # how far one cell reaches along each row normal
    return np.any(slack <= band, axis=1)


def _boundary_biased(P: HPolytope, rng: np.random.Generator, count: int,
                     cell_width: np.ndarray) -> np.ndarray:
    n_uniform = count - count // 2
    uniform = sample_many(P, P.bbox, rng, n_uniform)
    want = count // 2
    near: list[np.ndarray] = []
    got = 0
    rounds = 0
    while got < want and rounds < 1_000:
        cand = sample_many(P, P.bbox, rng, max(want, 1024))
        hit = cand[_near_boundary(P, cand, cell_width)]
        near.append(hit)
        got += hit.shape[0]
        rounds += 1
    if got < want:
        log.warning(f"boundary band too thin, only {got} of {want} near-boundary samples")
    edge = np.vstack(near)[:want] if near else np.empty((0, P.n))
    if edge.shape[0] < want:
        edge = np.vstack([edge, sample_many(P, P.bbox, rng, want - edge.shape[0])])
    return np.vstack([uniform, edge])


def worst_margins(P: HPolytope, model: DiscreteModel, X: np.ndarray, U: np.ndarray,
                  Wpts: np.ndarray) -> np.ndarray:
    """(N, K): max over Wpts of margin(P, step(x, u, w)) for every state/input pair."""
    succ = _successors(model, X, U, Wpts)
    N, K, V, n = succ.shape
    return margins(P, succ.reshape(-1, n)).reshape(N, K, V).max(axis=2)


def verify_invariance(P: HPolytope, model: DiscreteModel, U_grid, W_vertices, n_samples: int,
                      rng: np.random.Generator | None = None,
                      cell_width: np.ndarray | None = None) -> InvarianceReport:
    """
    Sampled invariance check. Half the samples uniform in P, half within one cell of the
    boundary. A sample is a counterexample when no input in U_grid keeps every disturbance
    point inside P.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    U = np.atleast_2d(np.asarray(U_grid, dtype=float)).reshape(-1, model.m)
    Wpts = _disturbance_points(model, W_vertices)
    cw = P.bbox.widths / 200.0 if cell_width is None else np.asarray(cell_width, dtype=float)

    X = _boundary_biased(P, rng, n_samples, cw)
    bad: list[np.ndarray] = []
    for start in range(0, X.shape[0], _VERIFY_CHUNK):
        chunk = X[start:start + _VERIFY_CHUNK]
        worst = worst_margins(P, model, chunk, U, Wpts)
        fail = np.all(worst > 0.0, axis=1)
        if np.any(fail):
            bad.append(chunk[fail])

    ce = np.vstack(bad) if bad else np.empty((0, P.n))
    return InvarianceReport(n_samples=X.shape[0], counterexamples=ce)


def backup_lookup(table: BackupTable, S: GriddedSet, x) -> np.ndarray:
    """Stored input of x's cell, else of the nearest member center (box-normalised, lowest index wins)."""
    if len(table) == 0:
        raise EmptyTableError("backup table has no entries")
    x = np.asarray(x, dtype=float).reshape(-1)
    cell = int(S.grid.cell_of(x)[0])
    if cell >= 0:
        hit = table.get(cell)
        if hit is not None:
            return hit.copy()

    w = S.grid.box.widths
    centers = S.grid.centers()[table.cells]
    d2 = (((centers - x) / w) ** 2).sum(axis=1)
    return table.inputs[int(np.argmin(d2))].copy()
