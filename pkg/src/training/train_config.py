"""Training hyperparameters (defaults follow the desk-scale protocol)."""

from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.encoders.projection import ACTIVATIONS
from src.encoders.video_encoder import ENCODER_KINDS
from src.objectives.losses import SIMILARITIES


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    lr: float = Field(1e-4, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    weight_decay: float = Field(0.0, ge=0.0)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    dim: int = Field(128, ge=1)
    hidden_size: int = Field(128, ge=1)
    encoder: str = "mlp"
    activation: str = "sigmoid"
    clip_similarity: str = "dot"
    temperature_init: float = Field(0.07, gt=0.0)

    batch_size: int = Field(512, ge=1)
    batch_size_stage_two: int = Field(880, ge=1)
    epochs_stage_one: int = Field(50, ge=0)
    epochs_stage_two: int = Field(50, ge=0)
    epochs_stage_three: int = Field(100, ge=0)
    # stage three may start from fresh parameters when set
    skip_pretraining: bool = False

    kge_epochs: int = Field(200, ge=0)
    kge_batch_size: int = Field(512, ge=1)

    optimizer: OptimizerConfig = OptimizerConfig()

    @field_validator("encoder")
    @classmethod
    def _known_encoder(cls, value: str) -> str:
        if value not in ENCODER_KINDS:
            raise ValueError(f"encoder must be one of {ENCODER_KINDS}")
        return value

    @field_validator("activation")
    @classmethod
    def _known_activation(cls, value: str) -> str:
        if value not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        return value

    @field_validator("clip_similarity")
    @classmethod
    def _known_similarity(cls, value: str) -> str:
        if value not in SIMILARITIES:
            raise ValueError(f"clip_similarity must be one of {SIMILARITIES}")
        return value

    def epochs_for(self, stage: int) -> int:
        return {
            1: self.epochs_stage_one,
            2: self.epochs_stage_two,
            3: self.epochs_stage_three,
        }[stage]

    def batch_size_for(self, stage: int) -> int:
        return self.batch_size_stage_two if stage == 2 else self.batch_size
