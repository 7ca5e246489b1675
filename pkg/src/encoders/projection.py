"""Projection head z = act(C W1ᵀ + b) into the shared embedding space."""

import math

import numpy as np

from src.errors import ConfigError, UnknownIdError, check_dims

ACTIVATIONS = ("sigmoid", "identity", "normalize")
NORM_FLOOR = 1e-12


def sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def _norms(pre: np.ndarray) -> np.ndarray:
    return np.maximum(np.linalg.norm(pre, axis=-1, keepdims=True), NORM_FLOOR)


def uniform_init(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int
) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def check_ids(kind: str, ids: np.ndarray, size: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size:
        bad = ids[(ids < 0) | (ids >= size)]
        if bad.size:
            raise UnknownIdError(kind, int(bad[0]), size)
    return ids


class ProjectionHead:
    """Affine map k×H plus an activation.

    `sigmoid` and `identity` act elementwise; `normalize` puts every output on the
    unit sphere, where ‖a - b‖² = 2 - 2 a·b ties distances to dot products.
    """

    def __init__(
        self,
        w1: np.ndarray,
        b: np.ndarray,
        activation: str = "sigmoid",
        prefix: str = "head",
    ):
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation '{activation}'")
        check_dims(f"{prefix} bias", b.shape[0], w1.shape[0])
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.activation = activation
        self.prefix = prefix

    @classmethod
    def init(
        cls,
        hidden_size: int,
        dim: int,
        rng: np.random.Generator,
        activation: str = "sigmoid",
        prefix: str = "head",
    ) -> "ProjectionHead":
        return cls(
            uniform_init(rng, (dim, hidden_size), hidden_size),
            uniform_init(rng, (dim,), hidden_size),
            activation=activation,
            prefix=prefix,
        )

    @property
    def dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[1]

    def forward(self, hidden: np.ndarray) -> np.ndarray:
        check_dims("projection input", hidden.shape[-1], self.hidden_size)
        pre = hidden @ self.w1.T + self.b
        if self.activation == "identity":
            return pre
        if self.activation == "normalize":
            return pre / _norms(pre)
        return sigmoid(pre)

    def backward(
        self, hidden: np.ndarray, z: np.ndarray, dz: np.ndarray
    ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Gradient w.r.t. the hidden rows, plus parameter gradients."""
        if self.activation == "identity":
            dpre = dz
        elif self.activation == "normalize":
            norms = _norms(hidden @ self.w1.T + self.b)
            dpre = (dz - z * np.sum(z * dz, axis=-1, keepdims=True)) / norms
        else:
            dpre = dz * z * (1.0 - z)
        grads = {
            f"{self.prefix}.w1": dpre.T @ hidden,
            f"{self.prefix}.b": dpre.sum(axis=0),
        }
        return dpre @ self.w1, grads

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{self.prefix}.w1": self.w1, f"{self.prefix}.b": self.b}


def project(hidden: np.ndarray, head: ProjectionHead) -> np.ndarray:
    """Embed one hidden vector (H,) or a batch (B, H)."""
    hidden = np.asarray(hidden, dtype=np.float64)
    if hidden.ndim == 1:
        return head.forward(hidden[None, :])[0]
    return head.forward(hidden)
