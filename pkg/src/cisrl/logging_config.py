# logging_config — logs or it didn't happen

"""
Structlog over stdlib logging. JSON lines on stderr by default, colour console with
CISRL_VERBOSE. Every record carries the run id of the subcommand (or pooled job) that wrote it.
"""

import logging
import sys
from contextvars import ContextVar

import numpy as np
import structlog

from src.cisrl.config import settings

run_id_ctx: ContextVar[str | None] = ContextVar("run_id", default=None)

# third-party loggers kept at WARNING
_QUIET = ("torch", "asyncio")


def set_run_id(rid: str) -> None:
    run_id_ctx.set(rid)


def child_run_id(name: str) -> str:
    """parent/name. Pooled seeds show up as train-3fa2b1c0/cis_seed1."""
    return f"{run_id_ctx.get() or 'run'}/{name}"


def _add_run_id(logger, method, event_dict):
    event_dict["run_id"] = run_id_ctx.get() or "-"
    return event_dict


def _plain_numbers(logger, method, event_dict):
    # JSONRenderer can't take np.int64 or arrays
    for k, v in event_dict.items():
        if isinstance(v, np.ndarray):
            event_dict[k] = v.tolist()
        elif isinstance(v, np.generic):
            event_dict[k] = v.item()
    return event_dict


def setup_logging(level: str | None = None) -> None:
    """Once per process. Pool workers call it from their initializer."""
    chain = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="iso", utc=True),
        _add_run_id,
        _plain_numbers,
        structlog.processors.StackInfoRenderer(),
    ]
    render = structlog.dev.ConsoleRenderer(colors=True) if settings.verbose else structlog.processors.JSONRenderer()

    structlog.configure(
        processors=[*chain, structlog.stdlib.ProcessorFormatter.wrap_for_formatter],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(structlog.stdlib.ProcessorFormatter(
        foreign_pre_chain=chain,
        processors=[structlog.stdlib.ProcessorFormatter.remove_processors_meta, render],
    ))

    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(getattr(logging, (level or settings.log_level).upper(), logging.INFO))
    for name in _QUIET:
        logging.getLogger(name).setLevel(logging.WARNING)
