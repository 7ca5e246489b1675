"""Two-stage pipelines: look up the video's head entity, then reason in text space.

VRT ranks tails with the KGE model. VRV commits to the top-1 tail that has a tag
and retrieves videos by cosine against that tag's CLIP embedding.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from src.baselines.clip_only import clip_only_train
from src.datamodel.models import Dataset, LinkTable
from src.errors import DataFormatError
from src.evaluation.tasks import JointScorer, Scorer, VrvScores, cosine_matrix, link_queries
from src.kge.models import KgeModel, build_kge_model
from src.kge.trainer import train_kge
from src.objectives.models import KgeConfig
from src.training.state import ModelState
from src.training.train_config import TrainConfig

logger = logging.getLogger(__name__)


@dataclass
class TwoStagePipeline:
    """Independently trained link table, KGE model and CLIP encoders."""

    links: LinkTable
    kge: KgeModel
    clip: ModelState
    tag_of_entity: np.ndarray
    entity_of_tag: np.ndarray
    z_video: np.ndarray
    z_tag: np.ndarray
    fallbacks: int = field(default=0)

    @classmethod
    def build(cls, dataset: Dataset, kge: KgeModel, clip: ModelState) -> "TwoStagePipeline":
        if dataset.links is None:
            raise DataFormatError("two-stage pipelines need a link table")
        return cls(
            links=dataset.links,
            kge=kge,
            clip=clip,
            tag_of_entity=dataset.tag_of_entity,
            entity_of_tag=np.asarray(dataset.entity_of_tag, dtype=np.int64),
            z_video=clip.video_embeddings(dataset),
            z_tag=clip.tag_embeddings(),
        )

    @property
    def method(self) -> str:
        return f"clip+{self.kge.variant}"

    def head_of(self, video: int) -> int:
        head = self.links.entity(video)
        if head < 0:
            raise DataFormatError(f"video {video} has no linked head entity")
        return head

    def tag_distances(self, video: int, relation: int) -> np.ndarray:
        """KGE distance of (link(video), relation, entity of tag) for every tag.

        Tags not identified with an entity get +inf.
        """
        d = self.kge.tail_distances(self.head_of(video), relation)
        linked = self.entity_of_tag >= 0
        out = np.full(len(self.entity_of_tag), np.inf)
        out[linked] = d[self.entity_of_tag[linked]]
        return out

    def predict_tail(self, video: int, relation: int) -> int:
        """Best-scoring tail entity that has a tag."""
        d = self.kge.tail_distances(self.head_of(video), relation)
        order = np.argsort(d, kind="stable")
        for rank, entity in enumerate(order.tolist()):
            if self.tag_of_entity[entity] >= 0:
                if rank:
                    self.fallbacks += 1
                    logger.debug(f"[BASELINE] top-{rank + 1} tail used for video {video}")
                return entity
        raise DataFormatError("no entity has a tag")

    def video_similarities(self, video: int, relation: int) -> tuple[np.ndarray, int]:
        tail = self.predict_tail(video, relation)
        tag = int(self.tag_of_entity[tail])
        return cosine_matrix(self.z_tag[tag][None, :], self.z_video)[0], tail


def two_stage_vrt(p: TwoStagePipeline, video: int, relation: int) -> np.ndarray:
    """Tag ids, best first."""
    return np.argsort(p.tag_distances(video, relation), kind="stable")


def two_stage_vrv(p: TwoStagePipeline, video: int, relation: int) -> np.ndarray:
    """Video ids, best first."""
    sims, _ = p.video_similarities(video, relation)
    return np.argsort(-sims, kind="stable")


def top1_tail_accuracy(p: TwoStagePipeline, dataset: Dataset, videos: np.ndarray) -> float:
    """Share of link queries whose committed tail is one of the true tails of (head, relation)."""
    queries, _ = link_queries(dataset, videos)
    if not queries:
        raise DataFormatError("no linked video to score")
    correct = sum(
        p.predict_tail(q.video, q.relation) in dataset.true_tails[(q.head, q.relation)]
        for q in queries
    )
    return correct / len(queries)


class TwoStageScorer(Scorer):
    def __init__(self, pipeline: TwoStagePipeline, dataset: Dataset):
        self.pipeline = pipeline
        self.method = pipeline.method
        self._clip = JointScorer(pipeline.clip, dataset)
        self.seen_videos = self._clip.seen_videos

    def video_tag_similarity(self, videos: np.ndarray) -> np.ndarray:
        return self._clip.video_tag_similarity(videos)

    def tail_distances(self, head: int, relation: int) -> np.ndarray:
        return self.pipeline.kge.tail_distances(head, relation)

    def head_distances(self, relation: int, tail: int) -> np.ndarray:
        return self.pipeline.kge.head_distances(relation, tail)

    def vrt_distances(self, video: int, relation: int) -> np.ndarray:
        return self.pipeline.tag_distances(video, relation)

    def vrv_scores(self, video: int, relation: int) -> VrvScores:
        sims, tail = self.pipeline.video_similarities(video, relation)
        return VrvScores(sims, True, tail)


def train_kge_baseline(
    variant: str,
    dataset: Dataset,
    cfg: TrainConfig,
    kge_cfg: KgeConfig,
    seed: int,
) -> KgeModel:
    model = build_kge_model(
        variant,
        dataset.num_entities,
        dataset.num_relations,
        cfg.dim,
        np.random.default_rng(seed),
    )
    train_kge(model, dataset, kge_cfg, cfg.optimizer, cfg.kge_epochs, cfg.kge_batch_size, seed)
    return model


def train_two_stage(
    variant: str,
    dataset: Dataset,
    cfg: TrainConfig,
    kge_cfg: KgeConfig,
    seed: int,
) -> TwoStagePipeline:
    """Train CLIP encoders and a KGE model separately, then wire them together."""
    clip = clip_only_train(dataset, cfg, seed)
    kge = train_kge_baseline(variant, dataset, cfg, kge_cfg, seed)
    return TwoStagePipeline.build(dataset, kge, clip)
