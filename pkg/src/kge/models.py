"""Translational score functions: TransE, TransH and TransR.

A model scores (h, r, t) as ‖v‖₂ where v is the variant's translation residual.
Entity vectors come from the entity table, or from an attached fusion head.
"""

from abc import ABC, abstractmethod
from typing import TYPE_CHECKING

import numpy as np

from src.encoders.projection import check_ids, uniform_init
from src.errors import ConfigError, check_dims
from src.objectives.losses import residual_gradient

if TYPE_CHECKING:
    from src.kge.fusion_head import FusionHead

VARIANTS = ("transe", "transh", "transr")


class KgeModel(ABC):
    variant: str
    prefix = "kge"

    def __init__(self, entities: np.ndarray, relations: np.ndarray):
        check_dims("relation table", relations.shape[1], entities.shape[1])
        self.entities = np.asarray(entities, dtype=np.float64)
        self.relations = np.asarray(relations, dtype=np.float64)
        self.fusion: "FusionHead | None" = None

    @property
    def dim(self) -> int:
        return self.relations.shape[1]

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    # --- variant hooks ---

    @abstractmethod
    def residual(self, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Translation residual v for entity vectors h, t and relation ids r."""

    @abstractmethod
    def residual_backward(
        self, h: np.ndarray, r: np.ndarray, t: np.ndarray, dv: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
        """(dh, dt, relation-side parameter grads) for flat (N, k) inputs."""

    def relation_parameters(self) -> dict[str, np.ndarray]:
        return {f"{self.prefix}.relations": self.relations}

    def post_step(self) -> None:
        """Re-impose parameter constraints after an optimizer step."""

    # --- entity representation ---

    def entity_vectors(self, ids: np.ndarray) -> np.ndarray:
        ids = check_ids("entity", ids, self.num_entities)
        if self.fusion is not None:
            return self.fusion.forward(ids, self.entities)
        return self.entities[ids]

    def all_entity_vectors(self) -> np.ndarray:
        return self.entity_vectors(np.arange(self.num_entities))

    def entity_backward(self, ids: np.ndarray, dvec: np.ndarray) -> dict[str, np.ndarray]:
        if self.fusion is not None:
            return self.fusion.backward(ids, self.entities, dvec, f"{self.prefix}.entities")
        dtable = np.zeros_like(self.entities)
        np.add.at(dtable, ids, dvec)
        return {f"{self.prefix}.entities": dtable}

    def parameters(self) -> dict[str, np.ndarray]:
        params = {f"{self.prefix}.entities": self.entities}
        params.update(self.relation_parameters())
        if self.fusion is not None:
            params.update(self.fusion.parameters())
        return params

    # --- scoring ---

    def distances(self, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
        """‖residual‖₂ with broadcasting over leading axes."""
        return np.linalg.norm(self.residual(h, r, t), axis=-1)

    def score(self, h: int, r: int, t: int) -> float:
        check_ids("relation", np.array([r]), self.num_relations)
        hv, tv = self.entity_vectors(np.array([h, t]))
        return float(self.distances(hv, np.int64(r), tv))

    def tail_distances(self, h: int, r: int) -> np.ndarray:
        """Distance of (h, r, e) for every entity e."""
        check_ids("relation", np.array([r]), self.num_relations)
        candidates = self.all_entity_vectors()
        return self.distances(candidates[h][None, :], np.int64(r), candidates)

    def head_distances(self, r: int, t: int) -> np.ndarray:
        """Distance of (e, r, t) for every entity e."""
        check_ids("relation", np.array([r]), self.num_relations)
        candidates = self.all_entity_vectors()
        return self.distances(candidates, np.int64(r), candidates[t][None, :])

    def triplet_backward(
        self, h: np.ndarray, r: np.ndarray, t: np.ndarray, dd: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
        """Backpropagate dL/dd through the distance for flat (N, k) inputs."""
        v = self.residual(h, r, t)
        dv = residual_gradient(v, dd)
        return self.residual_backward(h, r, t, dv)


class TransE(KgeModel):
    variant = "transe"

    def residual(self, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
        return h + self.relations[r] - t

    def residual_backward(
        self, h: np.ndarray, r: np.ndarray, t: np.ndarray, dv: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
        drel = np.zeros_like(self.relations)
        np.add.at(drel, r, dv)
        return dv, -dv, {f"{self.prefix}.relations": drel}


class TransH(KgeModel):
    """Translation on the relation hyperplane with unit normal w_r."""

    variant = "transh"

    def __init__(self, entities: np.ndarray, relations: np.ndarray, normals: np.ndarray):
        super().__init__(entities, relations)
        check_dims("hyperplane normals", normals.shape[1], self.dim)
        self.normals = np.asarray(normals, dtype=np.float64)
        self.post_step()

    def residual(self, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
        w = self.normals[r]
        e = h - t
        return e - np.sum(w * e, axis=-1, keepdims=True) * w + self.relations[r]

    def residual_backward(
        self, h: np.ndarray, r: np.ndarray, t: np.ndarray, dv: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
        w = self.normals[r]
        e = h - t
        w_dot_e = np.sum(w * e, axis=-1, keepdims=True)
        w_dot_g = np.sum(w * dv, axis=-1, keepdims=True)
        de = dv - w_dot_g * w
        dw = -(w_dot_g * e + w_dot_e * dv)
        drel = np.zeros_like(self.relations)
        dnormals = np.zeros_like(self.normals)
        np.add.at(drel, r, dv)
        np.add.at(dnormals, r, dw)
        return de, -de, {f"{self.prefix}.relations": drel, f"{self.prefix}.normals": dnormals}

    def relation_parameters(self) -> dict[str, np.ndarray]:
        params = super().relation_parameters()
        params[f"{self.prefix}.normals"] = self.normals
        return params

    def post_step(self) -> None:
        norms = np.linalg.norm(self.normals, axis=1, keepdims=True)
        self.normals /= np.maximum(norms, 1e-12)


class TransR(KgeModel):
    """Entities mapped into relation space by M_r before translating."""

    variant = "transr"

    def __init__(self, entities: np.ndarray, relations: np.ndarray, matrices: np.ndarray):
        super().__init__(entities, relations)
        check_dims("projection rows", matrices.shape[1], self.dim)
        check_dims("projection columns", matrices.shape[2], entities.shape[1])
        self.matrices = np.asarray(matrices, dtype=np.float64)

    def residual(self, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
        m = self.matrices[r]
        return np.einsum("...ij,...j->...i", m, h - t) + self.relations[r]

    def residual_backward(
        self, h: np.ndarray, r: np.ndarray, t: np.ndarray, dv: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, dict[str, np.ndarray]]:
        m = self.matrices[r]
        e = h - t
        de = np.einsum("nij,ni->nj", m, dv)
        drel = np.zeros_like(self.relations)
        dmat = np.zeros_like(self.matrices)
        np.add.at(drel, r, dv)
        np.add.at(dmat, r, np.einsum("ni,nj->nij", dv, e))
        return de, -de, {f"{self.prefix}.relations": drel, f"{self.prefix}.matrices": dmat}

    def relation_parameters(self) -> dict[str, np.ndarray]:
        params = super().relation_parameters()
        params[f"{self.prefix}.matrices"] = self.matrices
        return params


def build_kge_model(
    variant: str,
    num_entities: int,
    num_relations: int,
    dim: int,
    rng: np.random.Generator,
    entities: np.ndarray | None = None,
) -> KgeModel:
    """Fresh model; `entities` replaces the random entity table when given."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown KGE variant '{variant}' (expected one of {VARIANTS})")
    table = uniform_init(rng, (num_entities, dim), dim)
    if entities is not None:
        check_dims("entity vectors", entities.shape[1], dim)
        table = np.array(entities, dtype=np.float64)
    relations = uniform_init(rng, (num_relations, dim), dim)
    if variant == "transe":
        return TransE(table, relations)
    if variant == "transh":
        return TransH(table, relations, rng.normal(size=(num_relations, dim)))
    matrices = np.repeat(np.eye(dim)[None, :, :], num_relations, axis=0)
    return TransR(table, relations, matrices)


def model_from_arrays(variant: str, arrays: dict[str, np.ndarray]) -> KgeModel:
    """Rebuild a model from its `parameters()` arrays (checkpoint loading)."""
    entities = arrays["kge.entities"]
    relations = arrays["kge.relations"]
    if variant == "transe":
        return TransE(entities, relations)
    if variant == "transh":
        model: KgeModel = TransH(entities, relations, arrays["kge.normals"].copy())
        # keep the saved normals bit-exact
        model.normals[...] = arrays["kge.normals"]  # type: ignore[attr-defined]
        return model
    if variant == "transr":
        return TransR(entities, relations, arrays["kge.matrices"])
    raise ConfigError(f"unknown KGE variant '{variant}'")
