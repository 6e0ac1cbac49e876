# set_store — plain text or it didn't happen

"""
File formats for everything a run leaves behind or reads back:
key=value config files, H-polytopes, and the gridded set + backup table pair.
Floats are written with 17 significant digits so a reload is bit-exact.
"""

import logging
from pathlib import Path

import numpy as np

from src.cisrl.core.cis_synth import BackupTable, GriddedSet, Grid
from src.cisrl.core.errors import ConfigError, PolytopeError
from src.cisrl.core.geometry import BoxSet, HPolytope
from src.cisrl.core.models import ModelParams

log = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"


def _fmt(values) -> str:
    return " ".join(FLOAT_FMT % float(v) for v in np.ravel(values))


def parse_kv(text: str) -> dict[str, str]:
    """key=value per line. '#' starts a comment, blank lines skipped, repeated keys rejected."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_kv(path: str | Path) -> dict[str, str]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_kv(p.read_text(encoding="utf-8"))


def load_model_params(path: str | Path) -> ModelParams:
    """ModelParams from key=value. Unknown keys fail pydantic validation, surfaced as ConfigError."""
    raw = load_kv(path)
    try:
        return ModelParams.model_validate(raw)
    except ValueError as e:
        raise ConfigError(f"bad model file {path}: {e}") from e


def write_polytope(P: HPolytope, path: str | Path) -> Path:
    """Line 1 'n c', then one 'A_i1 ... A_in b_i' row per constraint."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{P.n} {P.c}"]
    lines += [_fmt(np.append(P.A[i], P.b[i])) for i in range(P.c)]
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    log.info(f"wrote polytope {p} ({P.c} rows)")
    return p


def read_polytope(path: str | Path) -> HPolytope:
    p = Path(path)
    if not p.is_file():
        raise PolytopeError(f"polytope file not found: {p}")
    rows = [ln.split() for ln in p.read_text(encoding="utf-8").splitlines() if ln.strip()]
    try:
        n, c = int(rows[0][0]), int(rows[0][1])
        body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except (IndexError, ValueError) as e:
        raise PolytopeError(f"malformed polytope file {p}: {e}") from e
    if body.shape != (c, n + 1):
        raise PolytopeError(f"{p}: header says {c}x{n + 1}, body is {body.shape}")
    return HPolytope(body[:, :n], body[:, n])


def write_gridded(S: GriddedSet, table: BackupTable, path: str | Path) -> Path:
    """Header 'n res... lower... upper...', then 'cell_index u...' per member cell."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    g = S.grid
    header = " ".join([str(g.n), *(str(r) for r in g.resolution), _fmt(g.box.lower), _fmt(g.box.upper)])
    lines = [header]
    lines += [f"{int(c)} {_fmt(u)}" for c, u in zip(table.cells, table.inputs)]
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    log.info(f"wrote gridded set {p} ({len(table)} member cells)")
    return p


def read_gridded(path: str | Path) -> tuple[GriddedSet, BackupTable]:
    """Members are exactly the cells listed. The sweep trace is not persisted."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"gridded set file not found: {p}")
    lines = [ln.split() for ln in p.read_text(encoding="utf-8").splitlines() if ln.strip()]
    try:
        head = lines[0]
        n = int(head[0])
        res = tuple(int(v) for v in head[1:1 + n])
        lower = [float(v) for v in head[1 + n:1 + 2 * n]]
        upper = [float(v) for v in head[1 + 2 * n:1 + 3 * n]]
        cells = np.array([int(r[0]) for r in lines[1:]], dtype=np.int64)
        inputs = np.array([[float(v) for v in r[1:]] for r in lines[1:]], dtype=float)
    except (IndexError, ValueError) as e:
        raise ConfigError(f"malformed gridded set file {p}: {e}") from e

    grid = Grid(BoxSet(lower, upper), res)
    member = np.zeros(grid.n_cells, dtype=bool)
    member[cells] = True
    order = np.argsort(cells, kind="stable")
    inputs = inputs.reshape(len(cells), -1) if len(cells) else np.empty((0, 1))
    table = BackupTable(cells=cells[order], inputs=inputs[order])
    S = GriddedSet(grid, member.reshape(grid.resolution), trace=[int(member.sum())])
    return S, table
