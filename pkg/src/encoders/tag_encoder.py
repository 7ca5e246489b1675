"""Tag encoder (per-tag hidden table with its own head) and the relation table T_r."""

import numpy as np

from src.encoders.projection import ProjectionHead, check_ids, uniform_init
from src.encoders.video_encoder import LookupEncoder
from src.errors import check_dims


class TagEncoder(LookupEncoder):
    def __init__(self, table: np.ndarray, head: ProjectionHead):
        super().__init__(table, head, prefix="tag_encoder", what="tag")

    @classmethod
    def init(
        cls,
        num_tags: int,
        hidden_size: int,
        dim: int,
        rng: np.random.Generator,
        activation: str = "sigmoid",
    ) -> "TagEncoder":
        table = uniform_init(rng, (num_tags, hidden_size), hidden_size)
        head = ProjectionHead.init(hidden_size, dim, rng, activation, prefix="tag_head")
        return cls(table, head)

    @property
    def num_tags(self) -> int:
        return len(self.table)


class RelationTable:
    prefix = "relations"

    def __init__(self, table: np.ndarray):
        self.table = np.asarray(table, dtype=np.float64)

    @classmethod
    def init(cls, num_relations: int, dim: int, rng: np.random.Generator) -> "RelationTable":
        return cls(uniform_init(rng, (num_relations, dim), dim))

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def __len__(self) -> int:
        return len(self.table)

    def lookup(self, relation_ids: np.ndarray) -> np.ndarray:
        ids = check_ids("relation", relation_ids, len(self.table))
        return self.table[ids]

    def backward(self, relation_ids: np.ndarray, dr: np.ndarray) -> dict[str, np.ndarray]:
        check_dims("relation gradient", dr.shape[-1], self.dim)
        dtable = np.zeros_like(self.table)
        np.add.at(dtable, np.asarray(relation_ids, dtype=np.int64), dr)
        return {f"{self.prefix}.table": dtable}

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{self.prefix}.table": self.table}


def encode_tag(tag: int, encoder: TagEncoder) -> np.ndarray:
    """Embedding z_T of a single tag."""
    return encoder.encode(np.array([tag]))[0]


def relation_embedding(relation: int, table: RelationTable) -> np.ndarray:
    """Copy of row T_r."""
    return table.lookup(np.array([relation]))[0].copy()
