"""Fusion head: entity vector = F · concat(frozen text embedding, KGE embedding)."""

import numpy as np

from src.encoders.projection import uniform_init
from src.errors import check_dims


class FusionHead:
    """Fully connected reduction from (text dim + KGE dim) down to the KGE dim."""

    prefix = "fusion"

    def __init__(
        self,
        text: np.ndarray,
        reduction: np.ndarray,
        fixed: bool = False,
        missing: int = 0,
    ):
        check_dims(
            "fusion reduction input",
            reduction.shape[1],
            text.shape[1] + reduction.shape[0],
        )
        self.text = np.asarray(text, dtype=np.float64)
        self.reduction = np.asarray(reduction, dtype=np.float64)
        self.fixed = fixed
        self.missing = missing

    @classmethod
    def init(
        cls,
        text: np.ndarray,
        dim: int,
        rng: np.random.Generator,
        fixed: bool = False,
        missing: int = 0,
    ) -> "FusionHead":
        """Random reduction, or the block selector [0 | I] when `fixed`."""
        width = text.shape[1] + dim
        if fixed:
            reduction = np.zeros((dim, width))
            reduction[:, text.shape[1] :] = np.eye(dim)
        else:
            reduction = uniform_init(rng, (dim, width), width)
        return cls(text, reduction, fixed=fixed, missing=missing)

    @property
    def text_dim(self) -> int:
        return self.text.shape[1]

    def _inputs(self, ids: np.ndarray, entities: np.ndarray) -> np.ndarray:
        return np.concatenate([self.text[ids], entities[ids]], axis=1)

    def forward(self, ids: np.ndarray, entities: np.ndarray) -> np.ndarray:
        return self._inputs(ids, entities) @ self.reduction.T

    def backward(
        self,
        ids: np.ndarray,
        entities: np.ndarray,
        dvec: np.ndarray,
        table_name: str,
    ) -> dict[str, np.ndarray]:
        """Gradients for the entity table and, unless fixed, the reduction."""
        dinputs = dvec @ self.reduction
        dtable = np.zeros_like(entities)
        np.add.at(dtable, ids, dinputs[:, self.text_dim :])
        grads = {table_name: dtable}
        if not self.fixed:
            grads[f"{self.prefix}.reduction"] = dvec.T @ self._inputs(ids, entities)
        return grads

    def parameters(self) -> dict[str, np.ndarray]:
        if self.fixed:
            return {}
        return {f"{self.prefix}.reduction": self.reduction}

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            f"{self.prefix}.reduction": self.reduction,
            f"{self.prefix}.text": self.text,
        }
