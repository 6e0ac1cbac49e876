# config — env vars or bust

"""
Settings via pydantic-settings. Reads CISRL_* from env, falls back to .env file.
Experiment knobs live in the key=value experiment file, not here.
"""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="CISRL_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",  # ignore unknown env vars
    )

    log_level: str = "INFO"
    verbose: bool = False  # pretty console logs instead of JSON
    workers: int = 2  # independent runs in flight at once
    out_dir: str = "runs"
    metrics_enabled: bool = True


settings = Settings()
