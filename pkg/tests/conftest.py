"""Shared fixtures: small hand-built and planted datasets, finite-difference helpers."""

from collections.abc import Callable

import numpy as np
import pytest

from src.config import settings
from src.datamodel.models import Dataset, LinkTable, SynthConfig, VideoTable
from src.datamodel.synthetic import gen_synthetic
from src.training.train_config import OptimizerConfig, TrainConfig

TOY_TRAIN = ((0, 0, 1), (1, 0, 2), (2, 1, 3), (3, 1, 4), (0, 1, 5), (5, 0, 4))
TOY_TEST = ((4, 0, 5), (1, 1, 3))


def numeric_gradient(
    f: Callable[[], float], x: np.ndarray, step: float = settings.GRADIENT_CHECK_STEP
) -> np.ndarray:
    """Central differences of f() w.r.t. every entry of `x` (mutated in place, then restored)."""
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        original = x[idx]
        x[idx] = original + step
        up = f()
        x[idx] = original - step
        down = f()
        x[idx] = original
        grad[idx] = (up - down) / (2.0 * step)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), 1e-12)
    return float(np.linalg.norm(a - n)) / scale


def toy_dataset(
    num_entities: int = 6,
    train: tuple[tuple[int, int, int], ...] = TOY_TRAIN,
    test: tuple[tuple[int, int, int], ...] = TOY_TEST,
    videos_per_entity: int = 2,
    feature_dims: tuple[int, int, int] = (3, 2, 2),
    unlinked: int = 0,
    seed: int = 0,
) -> Dataset:
    """Every entity has a tag and `videos_per_entity` videos; even videos train, odd test.

    `unlinked` extra videos (tag 0, no link) are appended to the test split.
    """
    rng = np.random.default_rng(seed)
    entity_of_video = np.repeat(np.arange(num_entities), videos_per_entity)
    tags = entity_of_video.copy()
    if unlinked:
        entity_of_video = np.concatenate([entity_of_video, np.full(unlinked, -1)])
        tags = np.concatenate([tags, np.zeros(unlinked, dtype=np.int64)])
    n = len(tags)
    blocks = [rng.normal(size=(n, d)).astype(np.float32) for d in feature_dims]
    names = tuple(f"entity_{i}" for i in range(num_entities))
    linked = num_entities * videos_per_entity
    return Dataset(
        entity_names=names,
        relation_names=("relation_0", "relation_1"),
        train=np.asarray(train, dtype=np.int64).reshape(-1, 3),
        test=np.asarray(test, dtype=np.int64).reshape(-1, 3),
        tag_names=names,
        entity_of_tag=np.arange(num_entities, dtype=np.int64),
        videos=VideoTable(tags=tags, frames=blocks[0], audio=blocks[1], text=blocks[2]),
        links=LinkTable(entity_of_video=entity_of_video.astype(np.int64)),
        train_videos=np.arange(0, linked, 2, dtype=np.int64),
        test_videos=np.concatenate([np.arange(1, linked, 2), np.arange(linked, n)]).astype(
            np.int64
        ),
    )


def small_synth_config(**overrides: object) -> SynthConfig:
    values: dict = {
        "num_entities": 30,
        "num_relations": 3,
        "num_triplets": 60,
        "latent_dim": 4,
        "frames_dim": 6,
        "audio_dim": 4,
        "text_dim": 4,
        "video_train_fraction": 0.7,
        "video_test_fraction": 0.3,
        "seed": 3,
    }
    values.update(overrides)
    return SynthConfig(**values)


def tiny_train_config(**overrides: object) -> TrainConfig:
    values: dict = {
        "dim": 6,
        "hidden_size": 5,
        "batch_size": 8,
        "batch_size_stage_two": 8,
        "epochs_stage_one": 2,
        "epochs_stage_two": 2,
        "epochs_stage_three": 2,
        "kge_epochs": 2,
        "kge_batch_size": 16,
        "optimizer": OptimizerConfig(lr=1e-2),
    }
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture
def toy() -> Dataset:
    return toy_dataset()


@pytest.fixture(scope="session")
def planted() -> Dataset:
    return gen_synthetic(small_synth_config())


@pytest.fixture
def tiny_cfg() -> TrainConfig:
    return tiny_train_config()
