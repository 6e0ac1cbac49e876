# step_log — if it isn't in the CSV it didn't happen

"""
Per-step CSV for supervised runs, timing in its own file so reruns stay byte-identical,
and the verify-logs check that re-derives a run summary from the step rows alone.
Floats go through repr(), the shortest string that reads back to the same double.
"""

import csv
import json
import logging
from pathlib import Path

import numpy as np

from src.cisrl.core.dynamics import DiscreteModel
from src.cisrl.core.errors import LogMismatchError
from src.cisrl.core.models import RunSummary
from src.cisrl.services.supervisor import OnlineResult

log = logging.getLogger(__name__)


def _vec_cols(prefix: str, size: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(size)]


def _f(v) -> str:
    return repr(float(v))


def write_step_log(result: OnlineResult, path: str | Path, n: int = 2, m: int = 1, d: int = 2) -> Path:
    """episode,k,x*,u_raw*,u_applied*,J,safe,updates_used,fallback,w*,violated"""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    header = (["episode", "k"] + _vec_cols("x", n) + _vec_cols("u_raw", m) + _vec_cols("u_applied", m)
              + ["J", "safe", "updates_used", "fallback"] + _vec_cols("w", d) + ["violated"])
    with p.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for ep, records in enumerate(result.episodes):
            for r in records:
                wa = r.w_applied if r.w_applied is not None else np.zeros(d)
                w.writerow(
                    [ep, r.k] + [_f(v) for v in r.x] + [_f(v) for v in r.u_raw]
                    + [_f(v) for v in r.u_applied]
                    + [_f(r.J), int(r.safe), r.updates_used, int(r.fallback)]
                    + [_f(v) for v in wa] + [int(r.violated)]
                )
    log.info(f"wrote step log {p}")
    return p


def write_timing(result: OnlineResult, path: str | Path) -> Path:
    """episode,k,kind,us. kind is check or update."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["episode", "k", "kind", "us"])
        for ep, records in enumerate(result.episodes):
            for r in records:
                for us in r.check_us:
                    w.writerow([ep, r.k, "check", f"{us:.3f}"])
                for us in r.update_us:
                    w.writerow([ep, r.k, "update", f"{us:.3f}"])
    return p


def timing_quantiles(result: OnlineResult) -> dict[str, float]:
    """Median and p99 microseconds per check and per update. Empty kinds are left out."""
    checks = [us for eps in result.episodes for r in eps for us in r.check_us]
    updates = [us for eps in result.episodes for r in eps for us in r.update_us]
    out: dict[str, float] = {}
    for name, vals in (("check", checks), ("update", updates)):
        if vals:
            out[f"{name}_median_us"] = float(np.median(vals))
            out[f"{name}_p99_us"] = float(np.quantile(vals, 0.99))
    return out


def read_step_log(path: str | Path) -> list[dict[str, str]]:
    p = Path(path)
    if not p.is_file():
        raise LogMismatchError(f"step log not found: {p}")
    with p.open(newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def _cols(row: dict[str, str], prefix: str) -> np.ndarray:
    keys = sorted((k for k in row if k.startswith(prefix) and k[len(prefix):].isdigit()),
                  key=lambda k: int(k[len(prefix):]))
    return np.array([float(row[k]) for k in keys], dtype=float)


def summarize_steps(rows: list[dict[str, str]]) -> dict[str, int]:
    """The counted fields of a RunSummary, straight from the rows."""
    return {
        "episodes": len({r["episode"] for r in rows}),
        "violations": sum(int(r["violated"]) for r in rows),
        "fallback_count": sum(int(r["fallback"]) for r in rows),
        "updates_total": sum(int(r["updates_used"]) for r in rows),
    }


def check_continuity(rows: list[dict[str, str]], model: DiscreteModel) -> None:
    """Within an episode, each logged x must be the model step of the previous row, bit for bit."""
    prev = None
    for i, r in enumerate(rows):
        if prev is not None and prev["episode"] == r["episode"]:
            if int(prev["violated"]):
                raise LogMismatchError(f"row {i}: episode continues after a violation")
            expect = model.step(_cols(prev, "x"), _cols(prev, "u_applied"), _cols(prev, "w"))
            got = _cols(r, "x")
            if not np.array_equal(expect, got):
                raise LogMismatchError(f"row {i}: logged state {got} != model step {expect}")
        prev = r


def verify_logs(step_log: str | Path, summary_path: str | Path,
                model: DiscreteModel | None = None) -> RunSummary:
    """Re-derive the summary counts from the step log and compare. Raises LogMismatchError."""
    rows = read_step_log(step_log)
    derived = summarize_steps(rows)
    if model is not None:
        check_continuity(rows, model)

    sp = Path(summary_path)
    if not sp.is_file():
        raise LogMismatchError(f"summary not found: {sp}")
    summary = RunSummary.model_validate(json.loads(sp.read_text(encoding="utf-8")))
    bad = {
        k: (getattr(summary, k), v) for k, v in derived.items()
        if getattr(summary, k) is not None and getattr(summary, k) != v
    }
    if bad:
        raise LogMismatchError(f"summary disagrees with step log: {bad}")
    log.info(f"verify-logs ok: {derived}")
    return summary
