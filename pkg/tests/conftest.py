# conftest — shared fixtures, small enough to run on every commit

"""
Fixtures shared by unit and integration tests.
The CSTR sets here are coarse (80x80 grid, 31 inputs) so the whole suite stays fast;
slow-marked tests build the full 200x200 ones themselves.
"""

import os

import numpy as np
import pytest

# run dispatch inline unless a test asks for a pool
os.environ.setdefault("CISRL_WORKERS", "1")

from src.cisrl.core.cis_synth import Grid, extract_polytope, synthesize, u_grid
from src.cisrl.core.dynamics import U_BOX, W_BOX, X_BOX, CSTRModel, LinearModel
from src.cisrl.core.geometry import BoxSet, HPolytope, box_to_polytope
from src.cisrl.logging_config import run_id_ctx
from src.cisrl.services.supervisor import Backup

COARSE_RES = 80
COARSE_U = 31


@pytest.fixture(autouse=True)
def _isolate_run_id():
    """main() sets a process-wide run id; keep it from leaking between tests."""
    token = run_id_ctx.set(None)
    yield
    run_id_ctx.reset(token)


@pytest.fixture
def unit_box() -> HPolytope:
    """|x1| <= 1, |x2| <= 1"""
    return box_to_polytope(BoxSet([-1.0, -1.0], [1.0, 1.0]))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cstr() -> CSTRModel:
    return CSTRModel()


@pytest.fixture
def doubling() -> LinearModel:
    """x+ = 2x + u, kernel [-1, 1] for |u| <= 1"""
    return LinearModel([[2.0]], [[1.0]])


def _coarse_sets(model: CSTRModel, robust: bool):
    grid = Grid(X_BOX, (COARSE_RES, COARSE_RES))
    U = u_grid(U_BOX, COARSE_U)
    W = W_BOX.vertices() if robust else []
    S, table = synthesize(model, X_BOX, U, W, grid)
    P = extract_polytope(S, model, U, W, n_samples=2_000, seed=0)
    return S, table, P, U


@pytest.fixture(scope="session")
def cstr_cis(cstr):
    """(S, table, P, U_grid) for the deterministic CSTR, coarse grid."""
    return _coarse_sets(cstr, robust=False)


@pytest.fixture(scope="session")
def cstr_rcis(cstr):
    """Same, robust against W_BOX."""
    return _coarse_sets(cstr, robust=True)


@pytest.fixture
def cis_backup(cstr_cis) -> Backup:
    S, table, _, U = cstr_cis
    return Backup(table=table, S=S, u_grid=U)


@pytest.fixture
def rcis_backup(cstr_rcis) -> Backup:
    S, table, _, U = cstr_rcis
    return Backup(table=table, S=S, u_grid=U)
