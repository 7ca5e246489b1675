"""Evaluation harness for the VT, TV, TRT, VRT and VRV ranking tasks.

Every task is scored by a `Scorer`; each method (joint model, pure KGE, CLIP-only,
two-stage pipeline) provides the scores it is capable of and raises
CapabilityError for the rest.
"""

import logging
from abc import ABC
from typing import NamedTuple

import numpy as np

from src.baselines.capability import check_capability
from src.datamodel.models import Dataset
from src.errors import CapabilityError, DataFormatError
from src.evaluation.ranking import MODES, RankResult, Task, rank_of
from src.kge.models import KgeModel
from src.training.state import ModelState

logger = logging.getLogger(__name__)

VRV_SCORINGS = ("distance", "cosine")
SPLITS = ("train", "test")


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a / np.maximum(np.linalg.norm(a, axis=-1, keepdims=True), 1e-12)
    b = b / np.maximum(np.linalg.norm(b, axis=-1, keepdims=True), 1e-12)
    return a @ b.T


class VrvScores(NamedTuple):
    scores: np.ndarray
    higher_is_better: bool
    # tail the scorer committed to, for pipelines that pick one first
    predicted_tail: int | None = None


class Scorer(ABC):
    """Scores candidates for each task; unsupported tasks raise CapabilityError."""

    method: str = "unknown"
    # videos a lookup encoder was fitted on; None when any video can be encoded
    seen_videos: np.ndarray | None = None

    def video_tag_similarity(self, videos: np.ndarray) -> np.ndarray:
        """(len(videos), T) cosine similarities."""
        raise CapabilityError(self.method, "vt/tv")

    def tail_distances(self, head: int, relation: int) -> np.ndarray:
        raise CapabilityError(self.method, Task.TRT_TAIL.value)

    def head_distances(self, relation: int, tail: int) -> np.ndarray:
        raise CapabilityError(self.method, Task.TRT_HEAD.value)

    def vrt_distances(self, video: int, relation: int) -> np.ndarray:
        """Distance from a video (through a relation) to every tag."""
        raise CapabilityError(self.method, Task.VRT.value)

    def vrv_scores(self, video: int, relation: int) -> VrvScores:
        raise CapabilityError(self.method, Task.VRV.value)


class JointScorer(Scorer):
    """Scores everything in the shared space of a trained ModelState."""

    def __init__(self, state: ModelState, dataset: Dataset, vrv_scoring: str = "distance"):
        if vrv_scoring not in VRV_SCORINGS:
            raise DataFormatError(f"vrv scoring must be one of {VRV_SCORINGS}")
        self.method = state.method
        self.vrv_scoring = vrv_scoring
        if state.encoder_kind == "lookup":
            self.seen_videos = dataset.train_videos
        self.z_video = state.video_embeddings(dataset)
        self.z_tag = state.tag_embeddings()
        self.relations = state.relations.table
        tag_of_entity = dataset.tag_of_entity
        self.untagged = tag_of_entity < 0
        self.z_entity = self.z_tag[np.where(self.untagged, 0, tag_of_entity)]

    def video_tag_similarity(self, videos: np.ndarray) -> np.ndarray:
        return cosine_matrix(self.z_video[videos], self.z_tag)

    def tail_distances(self, head: int, relation: int) -> np.ndarray:
        if self.untagged[head]:
            return np.full(len(self.z_entity), np.inf)
        query = self.z_entity[head] + self.relations[relation]
        d = np.linalg.norm(query[None, :] - self.z_entity, axis=1)
        d[self.untagged] = np.inf
        return d

    def head_distances(self, relation: int, tail: int) -> np.ndarray:
        if self.untagged[tail]:
            return np.full(len(self.z_entity), np.inf)
        d = np.linalg.norm(self.z_entity + self.relations[relation] - self.z_entity[tail], axis=1)
        d[self.untagged] = np.inf
        return d

    def vrt_distances(self, video: int, relation: int) -> np.ndarray:
        query = self.z_video[video] + self.relations[relation]
        return np.linalg.norm(query[None, :] - self.z_tag, axis=1)

    def vrv_scores(self, video: int, relation: int) -> VrvScores:
        query = self.z_video[video] + self.relations[relation]
        if self.vrv_scoring == "cosine":
            return VrvScores(cosine_matrix(query[None, :], self.z_video)[0], True)
        return VrvScores(np.linalg.norm(query[None, :] - self.z_video, axis=1), False)


class KgeScorer(Scorer):
    """Pure text-side KGE models: TRT only."""

    def __init__(self, model: KgeModel, method: str | None = None):
        self.model = model
        self.method = method or model.variant

    def tail_distances(self, head: int, relation: int) -> np.ndarray:
        return self.model.tail_distances(head, relation)

    def head_distances(self, relation: int, tail: int) -> np.ndarray:
        return self.model.head_distances(relation, tail)


# --- query construction ---


def _video_split(dataset: Dataset, split: str) -> np.ndarray:
    if split not in SPLITS:
        raise DataFormatError(f"split must be one of {SPLITS}")
    if not dataset.has_videos:
        raise DataFormatError("this task needs a dataset with videos")
    videos = dataset.train_videos if split == "train" else dataset.test_videos
    if len(videos) == 0:
        raise DataFormatError(f"dataset has no {split} videos")
    return np.asarray(videos, dtype=np.int64)


class LinkQuery(NamedTuple):
    video: int
    head: int
    relation: int
    tail: int


def link_queries(dataset: Dataset, videos: np.ndarray) -> tuple[list[LinkQuery], int]:
    """One query per (video, known triplet of its linked head); unlinked videos are skipped."""
    assert dataset.links is not None
    queries: list[LinkQuery] = []
    skipped = 0
    by_head = dataset.all_triplets_by_head
    for video in videos.tolist():
        head = dataset.links.entity(video)
        if head < 0:
            skipped += 1
            continue
        for h, r, t in by_head.get(head, np.zeros((0, 3), dtype=np.int64)).tolist():
            queries.append(LinkQuery(video, h, r, t))
    return queries, skipped


def _results(
    task: Task,
    modes: tuple[str, ...],
    ranks: dict[str, list[int]],
    skipped: int,
    labels: list[str],
) -> list[RankResult]:
    if not labels:
        raise DataFormatError(f"task {task.value}: no query could be scored ({skipped} skipped)")
    return [
        RankResult(task, mode, np.asarray(ranks[mode], dtype=np.int64), skipped, list(labels))
        for mode in modes
    ]


# --- tasks ---


def eval_vt(
    scorer: Scorer, dataset: Dataset, videos: np.ndarray, modes: tuple[str, ...] = MODES
) -> list[RankResult]:
    """Per video rank every tag by cosine; target is the video's tag."""
    assert dataset.videos is not None
    sims = scorer.video_tag_similarity(videos)
    ranks: dict[str, list[int]] = {mode: [] for mode in modes}
    labels = []
    for row, video in enumerate(videos.tolist()):
        tag = int(dataset.videos.tags[video])
        rank = rank_of(sims[row], [tag], higher_is_better=True)
        # one true tag per video, so both protocols agree
        for mode in modes:
            ranks[mode].append(rank)
        labels.append(f"video={video} tag={tag}")
    return _results(Task.VT, modes, ranks, 0, labels)


def eval_tv(
    scorer: Scorer, dataset: Dataset, videos: np.ndarray, modes: tuple[str, ...] = MODES
) -> list[RankResult]:
    """Per tag rank the given videos by cosine; targets are all videos bearing it."""
    assert dataset.videos is not None
    sims = scorer.video_tag_similarity(videos)
    video_tags = dataset.videos.tags[videos]
    ranks: dict[str, list[int]] = {mode: [] for mode in modes}
    labels = []
    skipped = 0
    for tag in range(sims.shape[1]):
        targets = np.flatnonzero(video_tags == tag)
        if len(targets) == 0:
            skipped += 1
            continue
        rank = rank_of(sims[:, tag], targets, higher_is_better=True)
        for mode in modes:
            ranks[mode].append(rank)
        labels.append(f"tag={tag}")
    return _results(Task.TV, modes, ranks, skipped, labels)


def eval_trt(
    scorer: Scorer,
    dataset: Dataset,
    triplets: np.ndarray | None = None,
    modes: tuple[str, ...] = MODES,
) -> list[RankResult]:
    """Head and tail prediction over test triplets; filtered drops other true answers."""
    triplets = dataset.test if triplets is None else triplets
    if len(triplets) == 0:
        raise DataFormatError("TRT needs at least one test triplet")
    tail_ranks: dict[str, list[int]] = {mode: [] for mode in modes}
    head_ranks: dict[str, list[int]] = {mode: [] for mode in modes}
    tail_labels, head_labels = [], []
    tail_skipped = head_skipped = 0
    for h, r, t in np.asarray(triplets).tolist():
        label = f"head={h} relation={r} tail={t}"
        d_tail = scorer.tail_distances(h, r)
        if np.isfinite(d_tail[t]):
            for mode in modes:
                exclude = list(dataset.true_tails[(h, r)]) if mode == "filtered" else None
                tail_ranks[mode].append(rank_of(d_tail, [t], exclude=exclude))
            tail_labels.append(label)
        else:
            tail_skipped += 1
        d_head = scorer.head_distances(r, t)
        if np.isfinite(d_head[h]):
            for mode in modes:
                exclude = list(dataset.true_heads[(r, t)]) if mode == "filtered" else None
                head_ranks[mode].append(rank_of(d_head, [h], exclude=exclude))
            head_labels.append(label)
        else:
            head_skipped += 1
    return _results(Task.TRT_HEAD, modes, head_ranks, head_skipped, head_labels) + _results(
        Task.TRT_TAIL, modes, tail_ranks, tail_skipped, tail_labels
    )


def eval_vrt(
    scorer: Scorer, dataset: Dataset, videos: np.ndarray, modes: tuple[str, ...] = MODES
) -> list[RankResult]:
    """Rank every tag by d(z_V + T_r, z_T); the target is the tail's tag."""
    queries, skipped = link_queries(dataset, videos)
    tag_of_entity = dataset.tag_of_entity
    ranks: dict[str, list[int]] = {mode: [] for mode in modes}
    labels = []
    for q in queries:
        target = int(tag_of_entity[q.tail])
        if target < 0:
            skipped += 1
            continue
        d = scorer.vrt_distances(q.video, q.relation)
        for mode in modes:
            exclude = None
            if mode == "filtered":
                tails = dataset.true_tails[(q.head, q.relation)]
                exclude = [int(tag_of_entity[e]) for e in tails if tag_of_entity[e] >= 0]
            ranks[mode].append(rank_of(d, [target], exclude=exclude))
        labels.append(f"video={q.video} relation={q.relation} tail={q.tail}")
    return _results(Task.VRT, modes, ranks, skipped, labels)


def eval_vrv(
    scorer: Scorer, dataset: Dataset, videos: np.ndarray, modes: tuple[str, ...] = MODES
) -> list[RankResult]:
    """Rank every other video; targets are the videos linked to the tail entity.

    The query video is never a candidate, so it can neither hit nor push a target down.
    """
    assert dataset.links is not None
    queries, skipped = link_queries(dataset, videos)
    ranks: dict[str, list[int]] = {mode: [] for mode in modes}
    labels = []
    predicted = correct = 0
    for q in queries:
        targets = [v for v in dataset.links.videos(q.tail) if v != q.video]
        if not targets:
            skipped += 1
            continue
        scored = scorer.vrv_scores(q.video, q.relation)
        true_tails = dataset.true_tails[(q.head, q.relation)]
        if scored.predicted_tail is not None:
            predicted += 1
            correct += scored.predicted_tail in true_tails
        for mode in modes:
            exclude = [q.video]
            if mode == "filtered":
                exclude += [v for e in true_tails if e != q.tail for v in dataset.links.videos(e)]
            ranks[mode].append(rank_of(scored.scores, targets, scored.higher_is_better, exclude))
        labels.append(f"video={q.video} relation={q.relation} tail={q.tail}")
    results = _results(Task.VRV, modes, ranks, skipped, labels)
    if predicted:
        accuracy = correct / predicted
        logger.info(f"[EVAL] vrv top-1 tail accuracy {accuracy:.4f} over {predicted} queries")
        for result in results:
            result.top1_accuracy = accuracy
    return results


def _warn_unseen_videos(scorer: Scorer, videos: np.ndarray, split: str) -> None:
    if scorer.seen_videos is None:
        return
    unseen = np.setdiff1d(videos, scorer.seen_videos)
    if len(unseen):
        logger.warning(
            f"[EVAL] {scorer.method}: lookup video encoder was never fitted on "
            f"{len(unseen)} of {len(videos)} {split} videos; their embeddings are random"
        )


def evaluate(
    scorer: Scorer,
    dataset: Dataset,
    tasks: list[Task],
    modes: tuple[str, ...] = MODES,
    split: str = "test",
) -> list[RankResult]:
    """Capability-check every task first, then score them in order."""
    for task in tasks:
        check_capability(scorer.method, task)
    if any(task not in (Task.TRT_HEAD, Task.TRT_TAIL) for task in tasks):
        _warn_unseen_videos(scorer, _video_split(dataset, split), split)
    results: list[RankResult] = []
    done: set[Task] = set()
    logger.info("=" * 70)
    logger.info(f"[EVAL] {scorer.method}: tasks {[t.value for t in tasks]}, modes {list(modes)}")
    for task in tasks:
        if task in done:
            continue
        if task in (Task.TRT_HEAD, Task.TRT_TAIL):
            batch = [r for r in eval_trt(scorer, dataset, modes=modes) if r.task in tasks]
            done.update((Task.TRT_HEAD, Task.TRT_TAIL))
        else:
            videos = _video_split(dataset, split)
            runner = {Task.VT: eval_vt, Task.TV: eval_tv, Task.VRT: eval_vrt, Task.VRV: eval_vrv}
            batch = runner[task](scorer, dataset, videos, modes)
            done.add(task)
        for result in batch:
            m = result.metrics
            logger.info(
                f"[EVAL] {result.task.value:8s} {result.mode:8s} MR={m.mr:.4f} "
                f"H@1={m.hits1:.4f} H@3={m.hits3:.4f} H@10={m.hits10:.4f} "
                f"queries={result.queries} skipped={result.skipped}"
            )
        results.extend(batch)
    logger.info("[EVAL] ✓ done")
    logger.info("=" * 70)
    return results
