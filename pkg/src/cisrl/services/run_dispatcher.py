# run_dispatcher — parallel seeds or a very long lunch

"""
Independent runs (seeds, reward variants) in a bounded process pool.
One crashed run never takes its siblings down: every job comes back as a RunOutcome,
errors included, in submission order. workers=1 runs inline, no pool at all.
"""

import asyncio
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import torch

from src.cisrl.config import settings
from src.cisrl.logging_config import child_run_id, run_id_ctx, set_run_id, setup_logging

log = logging.getLogger(__name__)


@dataclass
class RunJob:
    name: str
    fn: Callable[..., Any]  # module-level, so it pickles
    kwargs: dict[str, Any] = field(default_factory=dict)
    timeout: float | None = None  # seconds, pooled runs only. the worker still finishes; its outcome is an error


@dataclass
class RunOutcome:
    name: str
    result: Any = None
    error: str | None = None
    took_ms: int = 0

    @property
    def ok(self) -> bool:
        return self.error is None


def _init_worker() -> None:
    setup_logging()
    torch.set_num_threads(1)


def _entry(fn: Callable[..., Any], kwargs: dict[str, Any], run_id: str) -> Any:
    set_run_id(run_id)
    return fn(**kwargs)


async def _run_job(loop: asyncio.AbstractEventLoop, pool: ProcessPoolExecutor, job: RunJob) -> RunOutcome:
    """One job in the pool. Never raises, returns an error outcome instead."""
    start = time.perf_counter()
    try:
        fut = loop.run_in_executor(pool, _entry, job.fn, job.kwargs, child_run_id(job.name))
        result = await asyncio.wait_for(fut, timeout=job.timeout)
        return RunOutcome(job.name, result, None, int((time.perf_counter() - start) * 1000))
    except asyncio.TimeoutError:
        log.warning(f"{job.name} timed out after {job.timeout}s")
        return RunOutcome(job.name, None, "timeout", int((time.perf_counter() - start) * 1000))
    except Exception as e:
        log.exception(f"{job.name} crashed: {e}")
        return RunOutcome(job.name, None, f"{type(e).__name__}: {e}", int((time.perf_counter() - start) * 1000))


def _run_inline(jobs: list[RunJob]) -> list[RunOutcome]:
    torch.set_num_threads(1)
    out: list[RunOutcome] = []
    for job in jobs:
        start = time.perf_counter()
        token = run_id_ctx.set(child_run_id(job.name))
        try:
            result = job.fn(**job.kwargs)
            out.append(RunOutcome(job.name, result, None, int((time.perf_counter() - start) * 1000)))
        except Exception as e:
            log.exception(f"{job.name} crashed: {e}")
            out.append(RunOutcome(job.name, None, f"{type(e).__name__}: {e}",
                                  int((time.perf_counter() - start) * 1000)))
        finally:
            run_id_ctx.reset(token)
    return out


async def dispatch(jobs: list[RunJob], workers: int | None = None) -> list[RunOutcome]:
    """Fan out, gather, keep submission order."""
    workers = workers or settings.workers
    start = time.perf_counter()

    if workers <= 1 or len(jobs) <= 1:
        final = _run_inline(jobs)
    else:
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs)), initializer=_init_worker) as pool:
            results = await asyncio.gather(*(_run_job(loop, pool, j) for j in jobs),
                                           return_exceptions=True)
        final = []
        for job, r in zip(jobs, results):
            if isinstance(r, RunOutcome):
                final.append(r)
            else:
                log.error(f"unexpected exception from {job.name}: {r}")
                final.append(RunOutcome(job.name, None, str(r)))

    failed = [o.name for o in final if not o.ok]
    elapsed = int((time.perf_counter() - start) * 1000)
    log.info(f"dispatch finished in {elapsed}ms: {len(final) - len(failed)} ok, {len(failed)} failed")
    return final


def run_all(jobs: list[RunJob], workers: int | None = None) -> list[RunOutcome]:
    """Sync wrapper for the CLI."""
    return asyncio.run(dispatch(jobs, workers))
