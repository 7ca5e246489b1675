"""Three-stage protocol: tag pre-training, contrastive tag-encoder training, joint training."""

import logging
from dataclasses import dataclass

import numpy as np

from src.datamodel.models import Dataset
from src.errors import ConfigError, DataFormatError, DivergenceError
from src.kge.sampling import corrupt_tails
from src.kge.trainer import epoch_generators
from src.objectives.losses import (
    clip_loss_and_grad,
    kg_loss_from_distances,
    loss_joint,
    tag_loss_and_grad,
    translation_backward,
    translation_distances,
)
from src.objectives.models import JointLossWeights, KgeConfig
from src.training.state import STAGES, FreezeMask, LossRecord, ModelState
from src.training.train_config import TrainConfig

logger = logging.getLogger(__name__)

STAGE_ONE_WEIGHTS = JointLossWeights(kg=0.0, clip=0.0, tag=1.0)
STAGE_TWO_WEIGHTS = JointLossWeights(kg=0.0, clip=1.0, tag=0.0)


@dataclass
class JointBatch:
    """Sampled inputs of one joint batch; `kg_rows` index into `videos`."""

    videos: np.ndarray
    tags: np.ndarray
    kg_rows: np.ndarray
    relations: np.ndarray
    tail_tags: np.ndarray
    negative_tags: np.ndarray
    skipped: int


@dataclass
class JointLoss:
    l_kg: float
    l_clip: float
    l_tag: float
    total: float
    grads: dict[str, np.ndarray]


def _train_videos(dataset: Dataset) -> np.ndarray:
    if not dataset.has_videos or dataset.num_tags == 0:
        raise DataFormatError("this stage needs a dataset with videos and tags")
    if len(dataset.train_videos) == 0:
        raise DataFormatError("dataset has no training videos")
    return dataset.train_videos


def _batches(ids: np.ndarray, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = ids[rng.permutation(len(ids))]
    return [order[start : start + batch_size] for start in range(0, len(order), batch_size)]


def sample_joint_batch(
    state: ModelState,
    dataset: Dataset,
    videos: np.ndarray,
    negatives: int,
    rng: np.random.Generator,
) -> JointBatch:
    """Pick one uniform training triplet per video whose linked head has one."""
    assert dataset.videos is not None and dataset.links is not None
    kg_rows, relations, tails = [], [], []
    skipped = 0
    for row, video in enumerate(videos.tolist()):
        head = dataset.links.entity(video)
        candidates = dataset.train_triplets_by_head.get(head) if head >= 0 else None
        if candidates is None or len(candidates) == 0:
            skipped += 1
            continue
        _, relation, tail = candidates[int(rng.integers(len(candidates)))].tolist()
        kg_rows.append(row)
        relations.append(relation)
        tails.append(tail)

    tails_arr = np.asarray(tails, dtype=np.int64)
    negative_entities = corrupt_tails(tails_arr, negatives, dataset.num_entities, rng)
    tag_of_entity = dataset.tag_of_entity
    return JointBatch(
        videos=videos,
        tags=dataset.videos.tags[videos],
        kg_rows=np.asarray(kg_rows, dtype=np.int64),
        relations=np.asarray(relations, dtype=np.int64),
        tail_tags=tag_of_entity[tails_arr],
        negative_tags=tag_of_entity[negative_entities],
        skipped=skipped,
    )


def joint_loss_and_grad(
    state: ModelState,
    dataset: Dataset,
    batch: JointBatch,
    weights: JointLossWeights,
    kge: KgeConfig,
    similarity: str = "dot",
) -> JointLoss:
    """λ1·L_KG + λ2·L_CLIP + λ3·L_TAG over one batch, with gradients of the weighted sum.

    A term whose weight is zero contributes its value to the log but no gradient.
    """
    z_v, cache_v = state.video_encoder.forward(batch.videos, dataset.videos)
    n_kg = len(batch.kg_rows)
    tag_ids = np.concatenate([batch.tags, batch.tail_tags, batch.negative_tags.ravel()])
    z_t, cache_t = state.tag_encoder.forward(tag_ids)
    z_clip = z_t[: len(batch.videos)]
    z_tail = z_t[len(batch.videos) : len(batch.videos) + n_kg]

    grads: dict[str, np.ndarray] = {}
    dz_v = np.zeros_like(z_v)
    dz_t = np.zeros_like(z_t)

    l_tag, dz_tag, clf_grads = tag_loss_and_grad(z_v, batch.tags, state.classifier)
    if weights.tag:
        dz_v += weights.tag * dz_tag
        grads.update({k: weights.tag * g for k, g in clf_grads.items()})

    clip = clip_loss_and_grad(z_v, z_clip, state.clip, similarity)
    if weights.clip:
        dz_v += weights.clip * clip.d_video
        dz_t[: len(batch.videos)] += weights.clip * clip.d_tag
        grads["clip.log_tau"] = np.array([weights.clip * clip.d_log_tau])

    l_kg = 0.0
    if n_kg:
        negatives = batch.negative_tags.shape[1]
        z_neg = z_t[len(batch.videos) + n_kg :].reshape(n_kg, negatives, -1)
        h = z_v[batch.kg_rows]
        r = state.relations.lookup(batch.relations)
        d_pos = translation_distances(h, r, z_tail)
        d_neg = translation_distances((h + r)[:, None, :], 0.0, z_neg)
        l_kg, dd_pos, dd_neg = kg_loss_from_distances(d_pos, d_neg, kge)
        if weights.kg:
            g_pos = translation_backward(h, r, z_tail, dd_pos)
            g_neg = translation_backward((h + r)[:, None, :], 0.0, z_neg, dd_neg)
            dq = g_pos + g_neg.sum(axis=1)
            np.add.at(dz_v, batch.kg_rows, weights.kg * dq)
            start = len(batch.videos)
            dz_t[start : start + n_kg] -= weights.kg * g_pos
            dz_t[start + n_kg :] -= weights.kg * g_neg.reshape(n_kg * negatives, -1)
            grads.update(state.relations.backward(batch.relations, weights.kg * dq))

    if weights.tag or weights.clip or (weights.kg and n_kg):
        grads.update(state.video_encoder.backward(cache_v, dz_v))
    if weights.clip or (weights.kg and n_kg):
        grads.update(state.tag_encoder.backward(cache_t, dz_t))

    total = loss_joint(l_kg, clip.loss, l_tag, weights)
    return JointLoss(l_kg=l_kg, l_clip=clip.loss, l_tag=l_tag, total=total, grads=grads)


def _check_prerequisites(state: ModelState, stage: int, cfg: TrainConfig) -> None:
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage}")
    needed = {1: [], 2: [1], 3: [] if cfg.skip_pretraining else [1, 2]}[stage]
    for earlier in needed:
        if earlier not in state.completed_stages:
            raise ConfigError(
                f"stage {stage} needs stage {earlier} to be completed first "
                f"(pass a stage {earlier} checkpoint or run --stage all)"
            )


def _check_stage_three_tags(dataset: Dataset) -> None:
    missing = int(np.sum(dataset.tag_of_entity < 0))
    if missing:
        raise DataFormatError(
            f"stage three samples tails and negatives over all entities, "
            f"but {missing} entities have no tag"
        )


def run_stage(
    state: ModelState,
    dataset: Dataset,
    cfg: TrainConfig,
    stage: int,
    weights: JointLossWeights | None = None,
    kge: KgeConfig | None = None,
    epochs: int | None = None,
) -> list[LossRecord]:
    """Run (or resume) `stage`; `epochs` caps how many epochs this call runs."""
    _check_prerequisites(state, stage, cfg)
    if stage == 1:
        weights = STAGE_ONE_WEIGHTS
    elif stage == 2:
        weights = STAGE_TWO_WEIGHTS
    else:
        weights = JointLossWeights() if weights is None else weights
        _check_stage_three_tags(dataset)
    kge = kge or KgeConfig()
    videos = _train_videos(dataset)
    mask = FreezeMask.for_stage(stage)
    params = state.parameters()

    if state.stage != stage or stage in state.completed_stages:
        state.stage = stage
        state.epoch_in_stage = 0
    total_epochs = cfg.epochs_for(stage)
    end = total_epochs if epochs is None else min(total_epochs, state.epoch_in_stage + epochs)
    batch_size = cfg.batch_size_for(stage)

    logger.info("=" * 70)
    logger.info(
        f"[STAGE {stage}] epochs {state.epoch_in_stage + 1}..{end} of {total_epochs}, "
        f"{len(videos)} videos, batch {batch_size}, frozen: {sorted(mask.frozen) or 'none'}"
    )
    records = []
    while state.epoch_in_stage < end:
        epoch = state.epoch_in_stage + 1
        order_rng, sample_rng = epoch_generators(state.rng)
        sums = {"kg": 0.0, "clip": 0.0, "tag": 0.0, "total": 0.0}
        kg_batches = 0
        skipped = 0
        batches = _batches(videos, batch_size, order_rng)
        for ids in batches:
            negatives = kge.negatives if stage == 3 else 1
            if stage == 3:
                batch = sample_joint_batch(state, dataset, ids, negatives, sample_rng)
            else:
                batch = _content_batch(dataset, ids)
            result = joint_loss_and_grad(
                state, dataset, batch, weights, kge, cfg.clip_similarity
            )
            if not np.isfinite(result.total):
                raise DivergenceError(f"[STAGE {stage}] epoch {epoch}: non-finite loss")
            state.optimizer.step(params, mask.select(result.grads))
            sums["kg"] += result.l_kg
            sums["clip"] += result.l_clip
            sums["tag"] += result.l_tag
            sums["total"] += result.total
            kg_batches += 1 if len(batch.kg_rows) else 0
            skipped += batch.skipped

        record = LossRecord(
            stage=stage,
            epoch=epoch,
            w_kg=weights.kg,
            w_clip=weights.clip,
            w_tag=weights.tag,
            l_kg=sums["kg"] / kg_batches if kg_batches else 0.0,
            l_clip=sums["clip"] / len(batches),
            l_tag=sums["tag"] / len(batches),
            total=sums["total"] / len(batches),
            kg_skipped=skipped,
        )
        records.append(record)
        state.epoch_in_stage = epoch
        logger.info(
            f"[STAGE {stage}] epoch {epoch}/{total_epochs} total={record.total:.6f} "
            f"tag={record.l_tag:.6f} clip={record.l_clip:.6f} kg={record.l_kg:.6f}"
            + (f" kg_skipped={skipped}" if skipped else "")
        )

    state.history.extend(records)
    if state.epoch_in_stage >= total_epochs:
        state.completed_stages.add(stage)
        logger.info(f"[STAGE {stage}] ✓ completed")
    logger.info("=" * 70)
    return records


def _content_batch(dataset: Dataset, ids: np.ndarray) -> JointBatch:
    """Videos and their tags only; stages one and two never sample triplets."""
    assert dataset.videos is not None
    empty = np.zeros(0, dtype=np.int64)
    return JointBatch(
        videos=ids,
        tags=dataset.videos.tags[ids],
        kg_rows=empty,
        relations=empty,
        tail_tags=empty,
        negative_tags=np.zeros((0, 1), dtype=np.int64),
        skipped=0,
    )


def stage_one(
    state: ModelState, dataset: Dataset, cfg: TrainConfig, epochs: int | None = None
) -> ModelState:
    """Tag classification only; updates the video encoder, its head and the classifier."""
    run_stage(state, dataset, cfg, 1, epochs=epochs)
    return state


def stage_two(
    state: ModelState, dataset: Dataset, cfg: TrainConfig, epochs: int | None = None
) -> ModelState:
    """Contrastive alignment only; the video side stays frozen."""
    run_stage(state, dataset, cfg, 2, epochs=epochs)
    return state


def stage_three(
    state: ModelState,
    dataset: Dataset,
    cfg: TrainConfig,
    weights: JointLossWeights | None = None,
    kge: KgeConfig | None = None,
    epochs: int | None = None,
) -> ModelState:
    """Joint multi-task training with every parameter group trainable."""
    run_stage(state, dataset, cfg, 3, weights=weights, kge=kge, epochs=epochs)
    return state
