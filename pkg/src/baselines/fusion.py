"""+Embed fusion: entity vector = F · concat(frozen text embedding, KGE embedding).

The text block comes from a pre-trained tag encoder. Entities without a tag fall
back to hashing their name tokens into the tag table, or to zeros when even that
yields nothing.
"""

import hashlib
import logging
import re

import numpy as np

from src.datamodel.models import Dataset
from src.encoders.tag_encoder import TagEncoder
from src.errors import DataFormatError
from src.kge.fusion_head import FusionHead
from src.kge.models import KgeModel, build_kge_model
from src.kge.trainer import train_kge
from src.objectives.models import KgeConfig
from src.training.train_config import OptimizerConfig

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"[a-z0-9]+")


def name_tokens(name: str) -> list[str]:
    return _TOKEN.findall(name.lower())


def hashed_rows(name: str, num_tags: int) -> list[int]:
    """Tag-table rows an entity name's tokens hash to (md5, stable across runs)."""
    return [
        int(hashlib.md5(token.encode("utf-8")).hexdigest(), 16) % num_tags
        for token in name_tokens(name)
    ]


def entity_text_embeddings(
    dataset: Dataset, tag_encoder: TagEncoder, hash_names: bool = True
) -> tuple[np.ndarray, int]:
    """Per-entity text embedding and the number of entities that got zeros."""
    tag_vectors = tag_encoder.encode(np.arange(tag_encoder.num_tags))
    text = np.zeros((dataset.num_entities, tag_vectors.shape[1]))
    missing = 0
    tag_of_entity = dataset.tag_of_entity if dataset.num_tags else None
    for entity, name in enumerate(dataset.entity_names):
        tag = -1 if tag_of_entity is None else int(tag_of_entity[entity])
        if 0 <= tag < tag_encoder.num_tags:
            text[entity] = tag_vectors[tag]
            continue
        rows = hashed_rows(name, tag_encoder.num_tags) if hash_names else []
        if rows:
            text[entity] = tag_vectors[rows].mean(axis=0)
        else:
            missing += 1
    if missing:
        logger.warning(f"[BASELINE] {missing} entities have no text embedding; using zeros")
    return text, missing


def attach_fusion(
    model: KgeModel,
    text: np.ndarray,
    seed: int,
    fixed: bool = False,
    missing: int = 0,
) -> KgeModel:
    if len(text) != model.num_entities:
        raise DataFormatError(
            f"text embeddings cover {len(text)} entities, model has {model.num_entities}"
        )
    # separate stream so the KGE tables match an unfused model built from `seed`
    rng = np.random.default_rng([seed, 2])
    model.fusion = FusionHead.init(text, model.dim, rng, fixed=fixed, missing=missing)
    return model


def fuse_and_train(
    variant: str,
    dataset: Dataset,
    tag_encoder: TagEncoder,
    cfg: KgeConfig,
    optimizer: OptimizerConfig,
    dim: int,
    epochs: int,
    batch_size: int,
    seed: int,
    fixed: bool = False,
) -> KgeModel:
    """Train a KGE model whose entity vectors pass through a fusion head."""
    text, missing = entity_text_embeddings(dataset, tag_encoder)
    model = build_kge_model(
        variant,
        dataset.num_entities,
        dataset.num_relations,
        dim,
        np.random.default_rng(seed),
    )
    attach_fusion(model, text, seed, fixed=fixed, missing=missing)
    logger.info(
        f"[BASELINE] {variant}+embed: text dim {text.shape[1]}, kge dim {dim}, "
        f"{missing} entities without text"
    )
    train_kge(model, dataset, cfg, optimizer, epochs, batch_size, seed)
    return model
