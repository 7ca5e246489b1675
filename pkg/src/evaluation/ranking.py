"""Rank computation and MR / HITS@n aggregation."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from pydantic import BaseModel

from src.encoders.projection import check_ids
from src.errors import ConfigError, DataFormatError

HITS_AT = (1, 3, 10)
MODES = ("raw", "filtered")


class Task(str, Enum):
    VT = "vt"
    TV = "tv"
    TRT_HEAD = "trt_head"
    TRT_TAIL = "trt_tail"
    VRT = "vrt"
    VRV = "vrv"


# CLI task names; `trt` expands to both prediction directions
TASK_GROUPS: dict[str, tuple[Task, ...]] = {
    "vt": (Task.VT,),
    "tv": (Task.TV,),
    "trt": (Task.TRT_HEAD, Task.TRT_TAIL),
    "vrt": (Task.VRT,),
    "vrv": (Task.VRV,),
}


def expand_tasks(names: list[str] | tuple[str, ...]) -> list[Task]:
    tasks: list[Task] = []
    for name in names:
        if name not in TASK_GROUPS:
            raise ConfigError(f"unknown task '{name}' (expected one of {sorted(TASK_GROUPS)})")
        tasks.extend(t for t in TASK_GROUPS[name] if t not in tasks)
    return tasks


def rank_of(
    scores: np.ndarray,
    targets: np.ndarray | list[int],
    higher_is_better: bool = False,
    exclude: np.ndarray | list[int] | None = None,
) -> int:
    """1 + number of candidates strictly better than the best target.

    `exclude` lists candidates removed before ranking (filtered protocol); targets
    are never removed.
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.unique(np.asarray(targets, dtype=np.int64))
    if targets.size == 0:
        raise DataFormatError("ranking query has no targets")
    check_ids("candidate", targets, len(scores))
    oriented = -scores if higher_is_better else scores.copy()
    if exclude is not None and len(exclude):
        removed = np.setdiff1d(np.asarray(exclude, dtype=np.int64), targets)
        oriented[check_ids("candidate", removed, len(scores))] = np.inf
    best = oriented[targets].min()
    return 1 + int(np.count_nonzero(oriented < best))


class RankMetrics(BaseModel):
    mr: float
    hits1: float
    hits3: float
    hits10: float


def metrics(ranks: np.ndarray | list[int]) -> RankMetrics:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise DataFormatError("cannot aggregate an empty rank list")
    hits = {n: float(np.mean(ranks <= n)) for n in HITS_AT}
    return RankMetrics(mr=float(np.mean(ranks)), hits1=hits[1], hits3=hits[3], hits10=hits[10])


@dataclass
class RankResult:
    """Per-query ranks of one task under one protocol."""

    task: Task
    mode: str
    ranks: np.ndarray
    skipped: int = 0
    labels: list[str] = field(default_factory=list)
    top1_accuracy: float | None = None

    @property
    def queries(self) -> int:
        return len(self.ranks)

    @property
    def metrics(self) -> RankMetrics:
        return metrics(self.ranks)
