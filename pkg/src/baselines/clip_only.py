"""CLIP-only variant: stages one and two, no knowledge-graph term.

`stagewise_train` extends it with relation vectors fitted afterwards on the frozen
tag embeddings, so no knowledge-graph gradient ever reaches an encoder.
"""

import logging

from src.baselines.fusion import entity_text_embeddings
from src.datamodel.models import Dataset
from src.kge.trainer import fit_relations
from src.objectives.models import KgeConfig
from src.training.stages import stage_one, stage_two
from src.training.state import ModelState
from src.training.train_config import TrainConfig

logger = logging.getLogger(__name__)


def clip_only_train(
    dataset: Dataset, cfg: TrainConfig, seed: int, method: str = "clip"
) -> ModelState:
    """Video and tag encoders aligned by L_TAG then L_CLIP; capable of VT and TV only."""
    logger.info(f"[BASELINE] {method}: training encoders (stages 1-2, seed {seed})")
    state = ModelState.init(dataset, cfg, seed, method=method)
    stage_one(state, dataset, cfg)
    stage_two(state, dataset, cfg)
    return state


def stagewise_train(
    dataset: Dataset, cfg: TrainConfig, kge_cfg: KgeConfig, seed: int
) -> ModelState:
    state = clip_only_train(dataset, cfg, seed, method="stagewise")
    text, _ = entity_text_embeddings(dataset, state.tag_encoder)
    model = fit_relations(
        text, dataset, kge_cfg, cfg.optimizer, cfg.kge_epochs, cfg.kge_batch_size, seed
    )
    state.relations.table[: model.num_relations] = model.relations
    logger.info(f"[BASELINE] stagewise: {model.num_relations} relations fitted on frozen tags")
    return state
