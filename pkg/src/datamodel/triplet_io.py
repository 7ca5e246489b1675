"""Three-column TSV triplet files (head<TAB>relation<TAB>tail, string names)."""

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from src.datamodel.models import Dataset
from src.errors import DataFormatError

logger = logging.getLogger(__name__)


class NameIndex:
    """Interns names to dense ids in first-appearance order."""

    def __init__(self, names: tuple[str, ...] = ()):
        self._ids: dict[str, int] = {}
        for name in names:
            self.intern(name)

    def intern(self, name: str) -> int:
        if name not in self._ids:
            self._ids[name] = len(self._ids)
        return self._ids[name]

    def get(self, name: str) -> int | None:
        return self._ids.get(name)

    def names(self) -> tuple[str, ...]:
        return tuple(self._ids)

    def __len__(self) -> int:
        return len(self._ids)


def read_triplet_rows(path: Path) -> list[tuple[int, str, str, str]]:
    """Return (line number, head, relation, tail) for every non-blank line."""
    rows = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            text = line.rstrip("\r\n")
            if not text.strip():
                continue
            fields = text.split("\t")
            if len(fields) != 3 or not all(fields):
                raise DataFormatError(
                    f"expected 3 tab-separated fields, got {len(fields)}",
                    path=str(path),
                    line=line_no,
                )
            rows.append((line_no, fields[0], fields[1], fields[2]))
    return rows


def intern_triplets(
    rows: list[tuple[int, str, str, str]], entities: NameIndex, relations: NameIndex
) -> np.ndarray:
    """Map named rows to a de-duplicated id array, keeping first-appearance order."""
    seen: set[tuple[int, int, int]] = set()
    triplets: list[tuple[int, int, int]] = []
    for _, head, relation, tail in rows:
        key = (entities.intern(head), relations.intern(relation), entities.intern(tail))
        if key not in seen:
            seen.add(key)
            triplets.append(key)
    return np.asarray(triplets, dtype=np.int64).reshape(-1, 3)


def load_triplets(path: str | Path) -> Dataset:
    """Load a text-only dataset; every triplet lands in `train` until `with_split`."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError("triplet file not found", path=str(path))
    rows = read_triplet_rows(path)
    if not rows:
        raise DataFormatError("triplet file is empty", path=str(path))

    entities, relations = NameIndex(), NameIndex()
    triplets = intern_triplets(rows, entities, relations)
    duplicates = len(rows) - len(triplets)

    logger.info(
        f"[LOADER] ✓ {path.name}: {len(entities)} entities, {len(relations)} relations, "
        f"{len(triplets)} triplets ({duplicates} duplicates dropped)"
    )
    return Dataset(
        entity_names=entities.names(),
        relation_names=relations.names(),
        train=triplets,
    )


def format_triplets(dataset: Dataset, triplets: np.ndarray) -> str:
    lines = [
        f"{dataset.entity_names[h]}\t{dataset.relation_names[r]}\t{dataset.entity_names[t]}\n"
        for h, r, t in triplets.tolist()
    ]
    return "".join(lines)


def write_triplets(dataset: Dataset, path: str | Path, which: str = "all") -> None:
    """Inverse of `load_triplets`; `which` selects train, test or all (train then test)."""
    if which not in ("train", "test", "all"):
        raise ValueError(f"unknown triplet selection '{which}'")
    triplets = dataset.all_triplets if which == "all" else getattr(dataset, which)
    Path(path).write_text(format_triplets(dataset, triplets), encoding="utf-8")


def split(
    triplets: np.ndarray, fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle into (train, test); train receives round(fraction * n) rows."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"split fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(triplets))
    n_train = int(round(fraction * len(triplets)))
    train_rows = np.sort(order[:n_train])
    test_rows = np.sort(order[n_train:])
    return triplets[train_rows].copy(), triplets[test_rows].copy()


def with_split(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Re-split every triplet of `dataset` and return a new Dataset."""
    train, test = split(dataset.all_triplets, fraction, seed)
    logger.info(f"[LOADER] split {len(train)} train / {len(test)} test (seed={seed})")
    return replace(dataset, train=train, test=test)
