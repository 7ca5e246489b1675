"""ModelState: every trainable component, the optimizer, RNG and stage provenance."""

import hashlib
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel

from src.datamodel.models import Dataset
from src.encoders.projection import ProjectionHead
from src.encoders.tag_encoder import RelationTable, TagEncoder
from src.encoders.video_encoder import (
    Encoder,
    LookupEncoder,
    MlpEncoder,
    build_video_encoder,
)
from src.errors import CheckpointError, DataFormatError
from src.objectives.models import ClipParams, TagClassifier
from src.training.optimizer import Adam
from src.training.train_config import TrainConfig

STAGES = (1, 2, 3)
GROUPS = (
    "video_encoder",
    "video_head",
    "tag_encoder",
    "tag_head",
    "relations",
    "classifier",
    "clip",
)


class LossRecord(BaseModel):
    """Per-epoch loss components of one stage."""

    stage: int
    epoch: int
    w_kg: float
    w_clip: float
    w_tag: float
    l_kg: float
    l_clip: float
    l_tag: float
    total: float
    kg_skipped: int


def group_of(name: str) -> str:
    return name.split(".", 1)[0]


@dataclass(frozen=True)
class FreezeMask:
    trainable: frozenset[str]

    @classmethod
    def for_stage(cls, stage: int) -> "FreezeMask":
        if stage == 1:
            return cls(frozenset({"video_encoder", "video_head", "classifier"}))
        if stage == 2:
            return cls(frozenset({"tag_encoder", "tag_head", "clip"}))
        if stage == 3:
            return cls(frozenset(GROUPS))
        raise ValueError(f"unknown stage {stage}")

    def allows(self, name: str) -> bool:
        return group_of(name) in self.trainable

    @property
    def frozen(self) -> frozenset[str]:
        return frozenset(GROUPS) - self.trainable

    def select(self, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        return {name: grad for name, grad in grads.items() if self.allows(name)}


class ModelState:
    def __init__(
        self,
        video_encoder: Encoder,
        tag_encoder: TagEncoder,
        relations: RelationTable,
        classifier: TagClassifier,
        clip: ClipParams,
        optimizer: Adam,
        rng: np.random.Generator,
        method: str = "ours",
    ):
        self.video_encoder = video_encoder
        self.tag_encoder = tag_encoder
        self.relations = relations
        self.classifier = classifier
        self.clip = clip
        self.optimizer = optimizer
        self.rng = rng
        self.method = method
        self.stage = 1
        self.epoch_in_stage = 0
        self.completed_stages: set[int] = set()
        self.history: list[LossRecord] = []

    @classmethod
    def init(
        cls, dataset: Dataset, cfg: TrainConfig, seed: int, method: str = "ours"
    ) -> "ModelState":
        if dataset.videos is None:
            raise DataFormatError("joint training needs a dataset with videos")
        if dataset.num_tags == 0:
            raise DataFormatError("joint training needs at least one tag")
        rng = np.random.default_rng(seed)
        video_encoder = build_video_encoder(
            cfg.encoder,
            dataset.num_videos,
            dataset.videos.features.shape[1],
            cfg.hidden_size,
            cfg.dim,
            rng,
            cfg.activation,
        )
        tag_encoder = TagEncoder.init(
            dataset.num_tags, cfg.hidden_size, cfg.dim, rng, cfg.activation
        )
        relations = RelationTable.init(max(dataset.num_relations, 1), cfg.dim, rng)
        classifier = TagClassifier.init(dataset.num_tags, cfg.dim, rng)
        clip = ClipParams.from_temperature(cfg.temperature_init)
        return cls(
            video_encoder,
            tag_encoder,
            relations,
            classifier,
            clip,
            Adam(cfg.optimizer),
            rng,
            method=method,
        )

    @property
    def encoder_kind(self) -> str:
        return "mlp" if isinstance(self.video_encoder, MlpEncoder) else "lookup"

    @property
    def activation(self) -> str:
        return self.video_encoder.head.activation

    def parameters(self) -> dict[str, np.ndarray]:
        params: dict[str, np.ndarray] = {}
        for component in (
            self.video_encoder,
            self.tag_encoder,
            self.relations,
            self.classifier,
            self.clip,
        ):
            params.update(component.parameters())
        return params

    def group_digest(self, groups: set[str] | frozenset[str]) -> str:
        """SHA-256 over the bytes of every parameter in `groups`."""
        digest = hashlib.sha256()
        for name, array in sorted(self.parameters().items()):
            if group_of(name) in groups:
                digest.update(name.encode("utf-8"))
                digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()

    def rng_state(self) -> dict:
        return self.rng.bit_generator.state

    def meta(self) -> dict:
        return {
            "kind": "model_state",
            "method": self.method,
            "encoder": self.encoder_kind,
            "activation": self.activation,
            "stage": self.stage,
            "epoch_in_stage": self.epoch_in_stage,
            "completed_stages": sorted(self.completed_stages),
            "optimizer_steps": self.optimizer.steps(),
            "rng_state": self.rng_state(),
        }

    @classmethod
    def from_arrays(
        cls, arrays: dict[str, np.ndarray], meta: dict, cfg: TrainConfig
    ) -> "ModelState":
        try:
            activation = meta["activation"]
            video_head = ProjectionHead(
                arrays["video_head.w1"].copy(),
                arrays["video_head.b"].copy(),
                activation,
                "video_head",
            )
            video_encoder: Encoder
            if meta["encoder"] == "mlp":
                video_encoder = MlpEncoder(
                    arrays["video_encoder.w_in"].copy(),
                    arrays["video_encoder.b_in"].copy(),
                    video_head,
                )
            else:
                video_encoder = LookupEncoder(
                    arrays["video_encoder.table"].copy(), video_head, prefix="video_encoder"
                )
            tag_head = ProjectionHead(
                arrays["tag_head.w1"].copy(), arrays["tag_head.b"].copy(), activation, "tag_head"
            )
            tag_encoder = TagEncoder(arrays["tag_encoder.table"].copy(), tag_head)
            relations = RelationTable(arrays["relations.table"].copy())
            classifier = TagClassifier(arrays["classifier.w2"].copy())
            clip = ClipParams(arrays["clip.log_tau"].copy())

            rng = np.random.default_rng()
            rng.bit_generator.state = meta["rng_state"]
            optimizer = Adam(cfg.optimizer)
            optimizer.load_state(arrays, meta["optimizer_steps"])
        except KeyError as e:
            raise CheckpointError(f"checkpoint is missing {e}") from e

        state = cls(
            video_encoder,
            tag_encoder,
            relations,
            classifier,
            clip,
            optimizer,
            rng,
            method=meta.get("method", "ours"),
        )
        state.stage = int(meta["stage"])
        state.epoch_in_stage = int(meta["epoch_in_stage"])
        state.completed_stages = {int(s) for s in meta["completed_stages"]}
        return state

    def arrays(self) -> dict[str, np.ndarray]:
        arrays = dict(self.parameters())
        arrays.update(self.optimizer.state_arrays())
        return arrays

    # embeddings used by evaluation and export

    def video_embeddings(self, dataset: Dataset, ids: np.ndarray | None = None) -> np.ndarray:
        if ids is None:
            ids = np.arange(dataset.num_videos)
        return self.video_encoder.encode(np.asarray(ids, dtype=np.int64), dataset.videos)

    def tag_embeddings(self) -> np.ndarray:
        return self.tag_encoder.encode(np.arange(self.tag_encoder.num_tags))
