"""Loss configuration models and the loss-owned parameters (temperature, classifier)."""

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.encoders.projection import uniform_init
from src.errors import check_dims

DEFAULT_TEMPERATURE = 0.07


class KgeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    margin: float = Field(4.0, gt=0.0)
    negatives: int = Field(5, ge=1)
    norm: int = 2
    # None = uniform 1/n weighting of negatives
    adversarial_temperature: float | None = Field(None, gt=0.0)

    @field_validator("norm")
    @classmethod
    def _only_l2(cls, value: int) -> int:
        if value != 2:
            raise ValueError("only the L2 norm (p=2) is supported")
        return value


class JointLossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kg: float = Field(0.35, ge=0.0, allow_inf_nan=False)
    clip: float = Field(0.35, ge=0.0, allow_inf_nan=False)
    tag: float = Field(0.3, ge=0.0, allow_inf_nan=False)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.kg, self.clip, self.tag)


class ClipParams:
    """Learnable temperature τ = exp(log_tau), stored as a shape-(1,) array."""

    prefix = "clip"

    def __init__(self, log_tau: np.ndarray | float = math.log(DEFAULT_TEMPERATURE)):
        self.log_tau = np.atleast_1d(np.asarray(log_tau, dtype=np.float64)).copy()

    @classmethod
    def from_temperature(cls, tau: float) -> "ClipParams":
        if tau <= 0:
            raise ValueError("temperature must be positive")
        return cls(math.log(tau))

    @property
    def tau(self) -> float:
        return float(np.exp(self.log_tau[0]))

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{self.prefix}.log_tau": self.log_tau}


class TagClassifier:
    """Classification layer W2 (T×k) over video embeddings."""

    prefix = "classifier"

    def __init__(self, w2: np.ndarray):
        self.w2 = np.asarray(w2, dtype=np.float64)

    @classmethod
    def init(cls, num_tags: int, dim: int, rng: np.random.Generator) -> "TagClassifier":
        return cls(uniform_init(rng, (num_tags, dim), dim))

    @property
    def num_tags(self) -> int:
        return self.w2.shape[0]

    @property
    def dim(self) -> int:
        return self.w2.shape[1]

    def logits(self, z: np.ndarray) -> np.ndarray:
        check_dims("classifier input", z.shape[-1], self.dim)
        return z @ self.w2.T

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{self.prefix}.w2": self.w2}
