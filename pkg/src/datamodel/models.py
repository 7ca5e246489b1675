"""Domain types for the heterogeneous video / knowledge-graph dataset."""

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.errors import DataFormatError

EntityId = int
RelationId = int
VideoId = int
TagId = int

MODALITIES = ("frames", "audio", "text")


class Triplet(NamedTuple):
    head: EntityId
    relation: RelationId
    tail: EntityId


class SynthConfig(BaseModel):
    """Knobs of the planted generator."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    num_entities: int = Field(200, ge=1)
    num_relations: int = Field(10, ge=1)
    num_triplets: int = Field(1000, ge=1)
    min_videos_per_head: int = Field(1, ge=1)
    max_videos_per_head: int = Field(5, ge=1)
    latent_dim: int = Field(16, ge=1)
    frames_dim: int = Field(32, ge=1)
    audio_dim: int = Field(16, ge=1)
    text_dim: int = Field(16, ge=1)
    noise_std: float = Field(0.0, ge=0.0)
    feature_noise_std: float | None = Field(None, ge=0.0)
    split_fraction: float = Field(0.9, gt=0.0, lt=1.0)
    video_train_fraction: float = Field(0.9, gt=0.0, lt=1.0)
    video_test_fraction: float = Field(0.05, gt=0.0, lt=1.0)
    seed: int = 7

    @model_validator(mode="after")
    def _check_ranges(self) -> "SynthConfig":
        if self.max_videos_per_head < self.min_videos_per_head:
            raise ValueError("max_videos_per_head must be >= min_videos_per_head")
        if self.video_train_fraction + self.video_test_fraction > 1.0:
            raise ValueError("video train + test fractions must not exceed 1")
        return self

    @property
    def effective_feature_noise(self) -> float:
        if self.feature_noise_std is None:
            return self.noise_std
        return self.feature_noise_std


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class VideoRecord:
    id: VideoId
    tag: TagId
    frames: np.ndarray
    audio: np.ndarray
    text: np.ndarray

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([self.frames, self.audio, self.text])


@dataclass(frozen=True)
class VideoTable:
    """Column store of all videos; row i is video id i."""

    tags: np.ndarray
    frames: np.ndarray
    audio: np.ndarray
    text: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.tags)
        for name in MODALITIES:
            block = getattr(self, name)
            if block.ndim != 2 or block.shape[0] != n:
                raise DataFormatError(f"{name} features must have {n} rows")
            if not np.all(np.isfinite(block)):
                raise DataFormatError(f"{name} features contain non-finite values")
            _frozen(block)
        _frozen(self.tags)

    def __len__(self) -> int:
        return len(self.tags)

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.frames.shape[1], self.audio.shape[1], self.text.shape[1])

    @cached_property
    def features(self) -> np.ndarray:
        """Concatenated modality features, shape (videos, frames+audio+text)."""
        return _frozen(np.concatenate([self.frames, self.audio, self.text], axis=1))

    def record(self, video_id: VideoId) -> VideoRecord:
        if not 0 <= video_id < len(self):
            raise DataFormatError(f"unknown video id {video_id}")
        return VideoRecord(
            id=video_id,
            tag=int(self.tags[video_id]),
            frames=self.frames[video_id],
            audio=self.audio[video_id],
            text=self.text[video_id],
        )


@dataclass(frozen=True)
class LinkTable:
    """video -> head entity; -1 marks a video that the link file did not cover."""

    entity_of_video: np.ndarray

    def __post_init__(self) -> None:
        _frozen(self.entity_of_video)

    @cached_property
    def videos_of_entity(self) -> dict[EntityId, tuple[VideoId, ...]]:
        grouped: dict[EntityId, list[VideoId]] = {}
        for video, entity in enumerate(self.entity_of_video.tolist()):
            if entity >= 0:
                grouped.setdefault(entity, []).append(video)
        return {entity: tuple(videos) for entity, videos in grouped.items()}

    def videos(self, entity: EntityId) -> tuple[VideoId, ...]:
        return self.videos_of_entity.get(entity, ())

    def entity(self, video: VideoId) -> EntityId:
        return int(self.entity_of_video[video])


def _empty_triplets() -> np.ndarray:
    return np.zeros((0, 3), dtype=np.int64)


def _empty_ids() -> np.ndarray:
    return np.zeros(0, dtype=np.int64)


@dataclass(frozen=True)
class Dataset:
    entity_names: tuple[str, ...]
    relation_names: tuple[str, ...]
    train: np.ndarray = field(default_factory=_empty_triplets)
    test: np.ndarray = field(default_factory=_empty_triplets)
    tag_names: tuple[str, ...] = ()
    entity_of_tag: np.ndarray = field(default_factory=_empty_ids)
    videos: VideoTable | None = None
    links: LinkTable | None = None
    train_videos: np.ndarray = field(default_factory=_empty_ids)
    test_videos: np.ndarray = field(default_factory=_empty_ids)
    # planted ground truth, only present for generated data
    latents: np.ndarray | None = None
    offsets: np.ndarray | None = None

    def __post_init__(self) -> None:
        for name in ("train", "test"):
            triplets = getattr(self, name)
            if triplets.ndim != 2 or triplets.shape[1] != 3:
                raise DataFormatError(f"{name} triplets must have shape (n, 3)")
            if len(triplets):
                self._check_ids(name, triplets)
            _frozen(triplets)
        self._check_disjoint()
        if len(self.entity_of_tag) != len(self.tag_names):
            raise DataFormatError("entity_of_tag must have one entry per tag")
        linked = self.entity_of_tag[self.entity_of_tag >= 0]
        if len(np.unique(linked)) != len(linked):
            raise DataFormatError("tag -> entity identification map is not injective")
        for array in (self.entity_of_tag, self.train_videos, self.test_videos):
            _frozen(array)

    def _check_disjoint(self) -> None:
        overlap = {tuple(row) for row in self.train.tolist()} & {
            tuple(row) for row in self.test.tolist()
        }
        if overlap:
            raise DataFormatError(f"{len(overlap)} triplets appear in both train and test")
        shared = np.intersect1d(self.train_videos, self.test_videos)
        if len(shared):
            raise DataFormatError(f"{len(shared)} videos appear in both train and test splits")

    def _check_ids(self, name: str, triplets: np.ndarray) -> None:
        entities = triplets[:, [0, 2]]
        if entities.min() < 0 or entities.max() >= self.num_entities:
            raise DataFormatError(f"{name} triplets reference unknown entities")
        relations = triplets[:, 1]
        if relations.min() < 0 or relations.max() >= self.num_relations:
            raise DataFormatError(f"{name} triplets reference unknown relations")

    @property
    def num_entities(self) -> int:
        return len(self.entity_names)

    @property
    def num_relations(self) -> int:
        return len(self.relation_names)

    @property
    def num_tags(self) -> int:
        return len(self.tag_names)

    @property
    def num_videos(self) -> int:
        return 0 if self.videos is None else len(self.videos)

    @property
    def has_videos(self) -> bool:
        return self.videos is not None and self.links is not None

    @cached_property
    def all_triplets(self) -> np.ndarray:
        return _frozen(np.concatenate([self.train, self.test], axis=0))

    @cached_property
    def tag_of_entity(self) -> np.ndarray:
        """Inverse of `entity_of_tag`; -1 where an entity has no tag."""
        inverse = np.full(self.num_entities, -1, dtype=np.int64)
        for tag, entity in enumerate(self.entity_of_tag.tolist()):
            if entity >= 0:
                inverse[entity] = tag
        return _frozen(inverse)

    @cached_property
    def true_tails(self) -> dict[tuple[int, int], frozenset[int]]:
        """(head, relation) -> every tail seen in train or test."""
        grouped: dict[tuple[int, int], set[int]] = {}
        for h, r, t in self.all_triplets.tolist():
            grouped.setdefault((h, r), set()).add(t)
        return {key: frozenset(value) for key, value in grouped.items()}

    @cached_property
    def true_heads(self) -> dict[tuple[int, int], frozenset[int]]:
        """(relation, tail) -> every head seen in train or test."""
        grouped: dict[tuple[int, int], set[int]] = {}
        for h, r, t in self.all_triplets.tolist():
            grouped.setdefault((r, t), set()).add(h)
        return {key: frozenset(value) for key, value in grouped.items()}

    @cached_property
    def train_triplets_by_head(self) -> dict[int, np.ndarray]:
        grouped: dict[int, list[int]] = {}
        for row, head in enumerate(self.train[:, 0].tolist()):
            grouped.setdefault(head, []).append(row)
        return {
            head: _frozen(self.train[np.asarray(rows, dtype=np.int64)])
            for head, rows in grouped.items()
        }

    @cached_property
    def all_triplets_by_head(self) -> dict[int, np.ndarray]:
        grouped: dict[int, list[int]] = {}
        for row, head in enumerate(self.all_triplets[:, 0].tolist()):
            grouped.setdefault(head, []).append(row)
        return {
            head: _frozen(self.all_triplets[np.asarray(rows, dtype=np.int64)])
            for head, rows in grouped.items()
        }

    def triplet(self, row: int, which: str = "train") -> Triplet:
        h, r, t = getattr(self, which)[row].tolist()
        return Triplet(h, r, t)

    def video(self, video_id: VideoId) -> VideoRecord:
        if self.videos is None:
            raise DataFormatError("dataset has no videos")
        return self.videos.record(video_id)

    def fingerprint(self) -> str:
        """SHA-256 over names and array bytes; equal datasets share a fingerprint."""
        digest = hashlib.sha256()
        for names in (self.entity_names, self.relation_names, self.tag_names):
            digest.update("\x1f".join(names).encode("utf-8"))
            digest.update(b"\x1e")
        arrays: list[np.ndarray | None] = [
            self.train,
            self.test,
            self.entity_of_tag,
            self.train_videos,
            self.test_videos,
            self.latents,
            self.offsets,
        ]
        if self.videos is not None:
            arrays += [self.videos.tags, self.videos.frames, self.videos.audio]
            arrays += [self.videos.text]
        if self.links is not None:
            arrays.append(self.links.entity_of_video)
        for array in arrays:
            if array is None:
                digest.update(b"none")
            else:
                digest.update(str(array.shape).encode("ascii"))
                digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()

    def heads_without_videos(self) -> list[EntityId]:
        """Heads violating link-table closure (empty for well-formed data)."""
        if self.links is None:
            return []
        heads = np.unique(self.all_triplets[:, 0]).tolist()
        return [h for h in heads if not self.links.videos(h)]
