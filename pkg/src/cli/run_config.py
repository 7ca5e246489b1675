"""Experiment configuration file: one JSON document validated into pydantic models."""

import hashlib
import json
import logging
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.config import settings
from src.datamodel.models import SynthConfig
from src.errors import ConfigError
from src.evaluation.ranking import TASK_GROUPS
from src.objectives.models import JointLossWeights, KgeConfig
from src.training.train_config import TrainConfig

logger = logging.getLogger(__name__)


class OutputPaths(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    checkpoint: str = f"{settings.CHECKPOINT_DIR}/model.ckpt"
    results: str = f"{settings.RESULTS_DIR}/results.csv"
    loss_log: str = f"{settings.RESULTS_DIR}/loss_log.csv"


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED, ge=0)
    synth: SynthConfig = SynthConfig()
    train: TrainConfig = TrainConfig()
    kge: KgeConfig = KgeConfig()
    weights: JointLossWeights = JointLossWeights()
    tasks: list[str] = ["all"]
    output: OutputPaths = OutputPaths()

    @field_validator("tasks")
    @classmethod
    def _known_tasks(cls, value: list[str]) -> list[str]:
        unknown = [task for task in value if task != "all" and task not in TASK_GROUPS]
        if unknown:
            raise ValueError(f"unknown tasks {unknown} (expected 'all' or {sorted(TASK_GROUPS)})")
        if not value:
            raise ValueError("at least one task is required")
        return value

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        """SHA-256 of the canonical JSON dump; recorded in checkpoints."""
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def load_run_config(path: str | Path | None) -> RunConfig:
    """Read and validate a config file; no path means all defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from e
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"{path}: invalid config:\n{e}") from e
    logger.info(f"[CONFIG] ✓ loaded {path} (digest {cfg.digest()[:12]})")
    return cfg
