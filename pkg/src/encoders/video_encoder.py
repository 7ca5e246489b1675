"""Video encoders: a per-video hidden table (Lookup) or a one-layer MLP over features.

Both end in a ProjectionHead and expose the same forward/backward interface, so the
training code never needs to know which variant it holds.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from src.datamodel.models import VideoRecord, VideoTable
from src.encoders.projection import ProjectionHead, check_ids, uniform_init
from src.errors import ConfigError, DataFormatError, check_dims

ENCODER_KINDS = ("lookup", "mlp")


@dataclass
class EncoderCache:
    ids: np.ndarray
    inputs: np.ndarray | None
    hidden: np.ndarray
    z: np.ndarray


class Encoder(ABC):
    """Hidden-state producer followed by a projection head."""

    head: ProjectionHead

    @abstractmethod
    def hidden(
        self, ids: np.ndarray, videos: VideoTable | None
    ) -> tuple[np.ndarray, np.ndarray | None]:
        """Return hidden rows (B, H) and whatever the backward pass needs."""

    @abstractmethod
    def hidden_backward(
        self, cache: EncoderCache, dhidden: np.ndarray
    ) -> dict[str, np.ndarray]: ...

    @abstractmethod
    def own_parameters(self) -> dict[str, np.ndarray]: ...

    @property
    def dim(self) -> int:
        return self.head.dim

    def forward(
        self, ids: np.ndarray, videos: VideoTable | None = None
    ) -> tuple[np.ndarray, EncoderCache]:
        ids = np.asarray(ids, dtype=np.int64)
        hidden, inputs = self.hidden(ids, videos)
        z = self.head.forward(hidden)
        return z, EncoderCache(ids=ids, inputs=inputs, hidden=hidden, z=z)

    def encode(self, ids: np.ndarray, videos: VideoTable | None = None) -> np.ndarray:
        return self.forward(ids, videos)[0]

    def backward(self, cache: EncoderCache, dz: np.ndarray) -> dict[str, np.ndarray]:
        dhidden, grads = self.head.backward(cache.hidden, cache.z, dz)
        grads.update(self.hidden_backward(cache, dhidden))
        return grads

    def parameters(self) -> dict[str, np.ndarray]:
        params = self.own_parameters()
        params.update(self.head.parameters())
        return params


class LookupEncoder(Encoder):
    """Hidden state is a learned row per id."""

    kind = "lookup"

    def __init__(self, table: np.ndarray, head: ProjectionHead, prefix: str, what: str = "video"):
        check_dims(f"{prefix} hidden size", table.shape[1], head.hidden_size)
        self.table = np.asarray(table, dtype=np.float64)
        self.head = head
        self.prefix = prefix
        self.what = what

    def hidden(self, ids: np.ndarray, videos: VideoTable | None) -> tuple[np.ndarray, None]:
        ids = check_ids(self.what, ids, len(self.table))
        return self.table[ids], None

    def hidden_backward(
        self, cache: EncoderCache, dhidden: np.ndarray
    ) -> dict[str, np.ndarray]:
        dtable = np.zeros_like(self.table)
        np.add.at(dtable, cache.ids, dhidden)
        return {f"{self.prefix}.table": dtable}

    def own_parameters(self) -> dict[str, np.ndarray]:
        return {f"{self.prefix}.table": self.table}


class MlpEncoder(Encoder):
    """hidden = tanh(x W_inᵀ + b_in) over the concatenated modality features."""

    kind = "mlp"

    def __init__(
        self,
        w_in: np.ndarray,
        b_in: np.ndarray,
        head: ProjectionHead,
        prefix: str = "video_encoder",
    ):
        check_dims(f"{prefix} hidden size", w_in.shape[0], head.hidden_size)
        check_dims(f"{prefix} bias", b_in.shape[0], w_in.shape[0])
        self.w_in = np.asarray(w_in, dtype=np.float64)
        self.b_in = np.asarray(b_in, dtype=np.float64)
        self.head = head
        self.prefix = prefix

    @property
    def input_size(self) -> int:
        return self.w_in.shape[1]

    def hidden(self, ids: np.ndarray, videos: VideoTable | None) -> tuple[np.ndarray, np.ndarray]:
        if videos is None:
            raise DataFormatError("the mlp video encoder needs video features")
        ids = check_ids("video", ids, len(videos))
        inputs = np.asarray(videos.features[ids], dtype=np.float64)
        return self.hidden_from_features(inputs), inputs

    def hidden_from_features(self, inputs: np.ndarray) -> np.ndarray:
        check_dims("video features", inputs.shape[-1], self.input_size)
        return np.tanh(inputs @ self.w_in.T + self.b_in)

    def hidden_backward(
        self, cache: EncoderCache, dhidden: np.ndarray
    ) -> dict[str, np.ndarray]:
        assert cache.inputs is not None
        dpre = dhidden * (1.0 - cache.hidden**2)
        return {
            f"{self.prefix}.w_in": dpre.T @ cache.inputs,
            f"{self.prefix}.b_in": dpre.sum(axis=0),
        }

    def own_parameters(self) -> dict[str, np.ndarray]:
        return {f"{self.prefix}.w_in": self.w_in, f"{self.prefix}.b_in": self.b_in}


def build_video_encoder(
    kind: str,
    num_videos: int,
    feature_size: int,
    hidden_size: int,
    dim: int,
    rng: np.random.Generator,
    activation: str = "sigmoid",
) -> Encoder:
    if kind == "lookup":
        table = uniform_init(rng, (num_videos, hidden_size), hidden_size)
        head = ProjectionHead.init(hidden_size, dim, rng, activation, prefix="video_head")
        return LookupEncoder(table, head, prefix="video_encoder", what="video")
    if kind == "mlp":
        w_in = uniform_init(rng, (hidden_size, feature_size), feature_size)
        b_in = uniform_init(rng, (hidden_size,), feature_size)
        head = ProjectionHead.init(hidden_size, dim, rng, activation, prefix="video_head")
        return MlpEncoder(w_in, b_in, head)
    raise ConfigError(f"unknown video encoder '{kind}' (expected one of {ENCODER_KINDS})")


def encode_video(video: VideoRecord, encoder: Encoder) -> np.ndarray:
    """Embedding z_V of a single video."""
    if isinstance(encoder, MlpEncoder):
        hidden = encoder.hidden_from_features(video.features.astype(np.float64)[None, :])
        return encoder.head.forward(hidden)[0]
    return encoder.encode(np.array([video.id]))[0]
