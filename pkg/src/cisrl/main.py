# main — one CLI, seven subcommands

"""
Safe RL on a CSTR with control invariant sets. Synthesize the set, train against it,
supervise online, compare rewards. See README for the full walkthrough.

    cisrl synth --out runs
    cisrl train --config exp.cfg --out runs
    cisrl online --out runs --robust
"""

import argparse
import logging
import sys
import uuid
from pathlib import Path

from src.cisrl.adapters.metrics_client import get_metrics
from src.cisrl.config import settings
from src.cisrl.core.errors import CisRlError, ConfigError
from src.cisrl.logging_config import set_run_id, setup_logging
from src.cisrl.services import harness
from src.cisrl.utils.validation import load_experiment

log = logging.getLogger(__name__)

COMMANDS = {
    "synth": harness.cmd_synth,
    "train": harness.cmd_train,
    "test": harness.cmd_test,
    "online": harness.cmd_online,
    "econ": harness.cmd_econ,
    "ssopt": harness.cmd_ssopt,
    "verify-logs": harness.cmd_verify_logs,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cisrl", description="CIS-enhanced RL for the CSTR")
    parser.add_argument("command", choices=sorted(COMMANDS), help="what to run")
    parser.add_argument("--config", type=Path, help="key=value experiment file")
    parser.add_argument("--out", type=Path, help=f"output directory (default {settings.out_dir})")
    parser.add_argument("--seed", type=int, help="base seed")
    parser.add_argument("--robust", action="store_true", help="use W and the robust set")
    parser.add_argument("--mode", choices=["deterministic", "robust", "naive"], help="online check mode")
    parser.add_argument("--box", action="store_true", help="ssopt: constrain to the X box, not the set")
    return parser


def _dump_metrics(out_dir: Path) -> None:
    """Counters for this process, prometheus text format, next to the run artifacts."""
    path = Path(out_dir, "metrics.prom")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(get_metrics())


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    set_run_id(f"{args.command}-{uuid.uuid4().hex[:8]}")

    try:
        cfg = load_experiment(
            args.config,
            out_dir=args.out or (None if args.config else settings.out_dir),
            seed=args.seed,
            robust=True if args.robust else None,
            mode=args.mode,
        )
        if args.command == "ssopt":
            result = harness.cmd_ssopt(cfg, use_box=args.box)
        else:
            result = COMMANDS[args.command](cfg)
    except ConfigError as e:
        log.error(f"config error: {e}")
        return 2
    except CisRlError as e:
        log.error(f"{args.command} failed: {type(e).__name__}: {e}")
        return 1

    log.info(f"{args.command} done: {result.model_dump_json()}")
    if settings.metrics_enabled:
        _dump_metrics(cfg.out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
