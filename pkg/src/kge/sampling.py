"""Tail corruption: keep (h, r), draw t' uniformly from every entity except t."""

from typing import NamedTuple

import numpy as np

from src.datamodel.models import EntityId, Triplet
from src.errors import DataFormatError


class NegativeSample(NamedTuple):
    original: Triplet
    corrupted_tail: EntityId


def corrupt_tails(
    tails: np.ndarray, n: int, num_entities: int, rng: np.random.Generator
) -> np.ndarray:
    """(B, n) corrupted tails, i.i.d. with replacement, never equal to their row's tail."""
    if num_entities < 2:
        raise DataFormatError("negative sampling needs at least 2 entities")
    tails = np.asarray(tails, dtype=np.int64)
    draws = rng.integers(0, num_entities - 1, size=(len(tails), n))
    # shift past the true tail so draws cover E \ {t} uniformly
    return draws + (draws >= tails[:, None])


def sample_negatives(
    triplet: Triplet, n: int, num_entities: int, rng: np.random.Generator
) -> list[NegativeSample]:
    tails = corrupt_tails(np.array([triplet.tail]), n, num_entities, rng)[0]
    return [NegativeSample(triplet, int(t)) for t in tails.tolist()]
