"""Runtime settings for the video / knowledge-graph embedding toolkit."""

import logging
from functools import lru_cache
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict

# Get the directory where this config file is located
CONFIG_DIR = Path(__file__).parent


class Settings(BaseSettings):
    """Process-wide settings, overridable through VKG_* environment variables."""

    model_config = SettingsConfigDict(
        env_file=str(CONFIG_DIR / ".env"),
        env_file_encoding="utf-8",
        env_prefix="VKG_",
        case_sensitive=True,
        extra="ignore",
    )

    PROJECT_NAME: str = "video-kg-embedding"
    VERSION: str = "0.1.0"

    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    DEFAULT_SEED: int = 7

    # Default locations used when the CLI is not given explicit paths
    DATA_DIR: str = "data/synthetic"
    CHECKPOINT_DIR: str = "checkpoints"
    RESULTS_DIR: str = "results"

    # Central-difference step for gradient checks
    GRADIENT_CHECK_STEP: float = 1e-5


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    try:
        return Settings()
    except Exception as e:
        raise RuntimeError(f"Failed to load settings: {e}") from e


def configure_logging(level: str | None = None) -> None:
    """Install the root handler once per process."""
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format=settings.LOG_FORMAT,
    )


settings = get_settings()
