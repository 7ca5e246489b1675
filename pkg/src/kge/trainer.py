"""Mini-batch training of KGE models with the negative-sampling margin loss."""

import logging

import numpy as np

from src.datamodel.models import Dataset
from src.errors import DataFormatError, DivergenceError
from src.kge.models import KgeModel, build_kge_model
from src.kge.sampling import corrupt_tails
from src.objectives.losses import kg_loss_from_distances
from src.objectives.models import KgeConfig
from src.training.optimizer import Adam
from src.training.train_config import OptimizerConfig

logger = logging.getLogger(__name__)

ENTITY_TABLE = "kge.entities"


def epoch_generators(rng: np.random.Generator) -> tuple[np.random.Generator, np.random.Generator]:
    """(order, sampling) generators for one epoch, derived from a single draw."""
    epoch_seed = int(rng.integers(2**63))
    return np.random.default_rng([epoch_seed, 0]), np.random.default_rng([epoch_seed, 1])


def kge_loss_and_grad(
    model: KgeModel,
    h: np.ndarray,
    r: np.ndarray,
    t: np.ndarray,
    negatives: np.ndarray,
    cfg: KgeConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    """Batch-mean loss over positives (h, r, t) and (B, n) corrupted tails."""
    batch, n = negatives.shape
    ids = np.concatenate([h, t, negatives.ravel()])
    vectors = model.entity_vectors(ids)
    hv, tv, nv = vectors[:batch], vectors[batch : 2 * batch], vectors[2 * batch :]
    h_rep = np.repeat(hv, n, axis=0)
    r_rep = np.repeat(r, n)

    d_pos = model.distances(hv, r, tv)
    d_neg = model.distances(h_rep, r_rep, nv).reshape(batch, n)
    loss, dd_pos, dd_neg = kg_loss_from_distances(d_pos, d_neg, cfg)

    dh_pos, dt_pos, grads = model.triplet_backward(hv, r, tv, dd_pos)
    dh_neg, dt_neg, neg_grads = model.triplet_backward(h_rep, r_rep, nv, dd_neg.ravel())
    for name, grad in neg_grads.items():
        grads[name] = grads[name] + grad
    dh = dh_pos + dh_neg.reshape(batch, n, -1).sum(axis=1)
    grads.update(model.entity_backward(ids, np.concatenate([dh, dt_pos, dt_neg])))
    return loss, grads


def train_kge(
    model: KgeModel,
    dataset: Dataset,
    cfg: KgeConfig,
    optimizer: OptimizerConfig,
    epochs: int,
    batch_size: int,
    seed: int,
    trainable: set[str] | None = None,
) -> tuple[KgeModel, list[float]]:
    """Minimise the margin loss over `dataset.train`; returns the model and epoch losses.

    `trainable` restricts which parameters the optimizer may touch (all by default).
    """
    triplets = dataset.train
    if len(triplets) == 0:
        raise DataFormatError("no training triplets")
    params = model.parameters()
    names = set(params) if trainable is None else set(trainable) & set(params)
    adam = Adam(optimizer)
    rng = np.random.default_rng(seed)
    history: list[float] = []

    logger.info("=" * 70)
    logger.info(
        f"[KGE] training {model.variant} on {len(triplets)} triplets for {epochs} epochs"
    )
    report_every = max(1, epochs // 10)
    for epoch in range(epochs):
        order_rng, sample_rng = epoch_generators(rng)
        order = order_rng.permutation(len(triplets))
        batch_losses = []
        for start in range(0, len(order), batch_size):
            h, r, t = triplets[order[start : start + batch_size]].T
            negatives = corrupt_tails(t, cfg.negatives, model.num_entities, sample_rng)
            loss, grads = kge_loss_and_grad(model, h, r, t, negatives, cfg)
            if not np.isfinite(loss):
                raise DivergenceError(f"[KGE] epoch {epoch + 1}: non-finite loss")
            adam.step(params, {k: g for k, g in grads.items() if k in names})
            model.post_step()
            batch_losses.append(loss)
        history.append(float(np.mean(batch_losses)))
        if (epoch + 1) % report_every == 0 or epoch + 1 == epochs:
            logger.info(f"[KGE] epoch {epoch + 1}/{epochs} loss={history[-1]:.6f}")
        else:
            logger.debug(f"[KGE] epoch {epoch + 1}/{epochs} loss={history[-1]:.6f}")
    logger.info(f"[KGE] ✓ {model.variant} done")
    logger.info("=" * 70)
    return model, history


def fit_relations(
    entity_vectors: np.ndarray,
    dataset: Dataset,
    cfg: KgeConfig,
    optimizer: OptimizerConfig,
    epochs: int,
    batch_size: int,
    seed: int,
    variant: str = "transe",
) -> KgeModel:
    """Train only relation-side parameters on top of frozen entity vectors."""
    model = build_kge_model(
        variant,
        dataset.num_entities,
        dataset.num_relations,
        entity_vectors.shape[1],
        np.random.default_rng(seed),
        entities=entity_vectors,
    )
    trainable = set(model.parameters()) - {ENTITY_TABLE}
    train_kge(model, dataset, cfg, optimizer, epochs, batch_size, seed, trainable=trainable)
    return model
