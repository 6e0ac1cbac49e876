# validation — garbage in, exit code 2 out

"""Experiment config checks. Reject a bad config before it burns an hour of training."""

from pathlib import Path

from pydantic import ValidationError

from src.cisrl.core.errors import ConfigError
from src.cisrl.core.models import ExperimentConfig
from src.cisrl.core.set_store import load_kv

FILE_KEYS = ("model_file", "set_file", "grid_file", "weights_file")


def validate_files(cfg: ExperimentConfig) -> None:
    """Every referenced file has to exist. Missing ones are listed together."""
    missing = [f"{k}={getattr(cfg, k)}" for k in FILE_KEYS
               if getattr(cfg, k) is not None and not Path(getattr(cfg, k)).is_file()]
    if missing:
        raise ConfigError(f"referenced files not found: {', '.join(missing)}")


def validate_seeds(cfg: ExperimentConfig) -> None:
    if not cfg.seeds:
        raise ConfigError("seeds list is empty")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError(f"seeds must be distinct, got {cfg.seeds}")


def validate_batches(cfg: ExperimentConfig) -> None:
    """Updates fire every batch_episodes episodes, so the budget has to divide evenly."""
    if cfg.episodes % cfg.batch_episodes:
        raise ConfigError(f"episodes ({cfg.episodes}) not a multiple of batch_episodes ({cfg.batch_episodes})")


def validate_experiment(cfg: ExperimentConfig) -> ExperimentConfig:
    """Run all checks. Call this before doing real work."""
    validate_files(cfg)
    validate_seeds(cfg)
    validate_batches(cfg)
    return cfg


def load_experiment(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """key=value file (optional) + CLI overrides -> validated ExperimentConfig. None overrides are skipped."""
    raw: dict = load_kv(path) if path is not None else {}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"bad experiment config: {e}") from e
    return validate_experiment(cfg)
