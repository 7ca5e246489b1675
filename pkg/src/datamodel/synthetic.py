"""Seeded generator for planted video / knowledge-graph datasets.

Entities are grouped into synonym classes that sit on small integer grids, one grid
per "root". Moving one step along grid axis i of root j is relation R_j[i], whose
offset vector is shared by every root using it. Candidate triplets are all entity
pairs whose classes are one step apart; the requested number is sampled from them.
Bases and offsets are quantised to a dyadic grid, so without noise
latent(h) + offset(r) - latent(t) is exactly zero in float64.

With noise σ each sampled triplet keeps its head and relation, but its tail is redrawn
from the class nearest latent(h) + offset(r) + σ·ε (the head's own class excluded).
The residual of a moved triplet is therefore at most 2σ‖ε‖.
"""

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from src.datamodel.models import Dataset, LinkTable, SynthConfig, VideoTable
from src.datamodel.triplet_io import split
from src.errors import InfeasibleConfigError

logger = logging.getLogger(__name__)

GRID_SIDE = 3
QUANTUM = 1.0 / 256.0
BASE_SCALE = 4.0
FEATURE_BIAS_SCALE = 0.1
SNAP_CHUNK = 4096


@dataclass(frozen=True)
class ClassLattice:
    """Grid placement of synonym classes plus the one-step edges between them."""

    roots: np.ndarray
    coords: np.ndarray
    root_relations: np.ndarray
    edges: np.ndarray

    @property
    def num_classes(self) -> int:
        return len(self.roots)


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.round(values / QUANTUM) * QUANTUM


def build_lattice(num_classes: int, num_relations: int) -> ClassLattice:
    axes = min(GRID_SIDE, num_relations)
    cells = list(itertools.product(range(GRID_SIDE), repeat=axes))
    cell_index = {cell: i for i, cell in enumerate(cells)}
    per_root = len(cells)
    num_roots = math.ceil(num_classes / per_root)

    root_relations = np.array(
        [[(j * axes + i) % num_relations for i in range(axes)] for j in range(num_roots)],
        dtype=np.int64,
    ).reshape(num_roots, axes)

    roots = np.arange(num_classes, dtype=np.int64) // per_root
    coords = np.array(
        [cells[c % per_root] for c in range(num_classes)], dtype=np.int64
    ).reshape(num_classes, axes)

    edges = []
    for c in range(num_classes):
        root, cell = int(roots[c]), cells[c % per_root]
        for axis in range(axes):
            if cell[axis] == GRID_SIDE - 1:
                continue
            step = list(cell)
            step[axis] += 1
            neighbor = root * per_root + cell_index[tuple(step)]
            if neighbor < num_classes:
                edges.append((c, int(root_relations[root, axis]), neighbor))
    return ClassLattice(
        roots=roots,
        coords=coords,
        root_relations=root_relations,
        edges=np.array(edges, dtype=np.int64).reshape(-1, 3),
    )


def _class_sizes(num_entities: int, synonyms: int) -> np.ndarray:
    num_classes = math.ceil(num_entities / synonyms)
    sizes = np.full(num_classes, synonyms, dtype=np.int64)
    sizes[-1] = num_entities - synonyms * (num_classes - 1)
    return sizes


def _capacity(lattice: ClassLattice, sizes: np.ndarray) -> int:
    if len(lattice.edges) == 0:
        return 0
    return int(np.sum(sizes[lattice.edges[:, 0]] * sizes[lattice.edges[:, 2]]))


def choose_synonyms(
    num_entities: int, num_relations: int, num_triplets: int
) -> tuple[int, ClassLattice]:
    """Smallest class size whose candidate set can hold `num_triplets` triplets."""
    best = 0
    for synonyms in range(1, num_entities + 1):
        sizes = _class_sizes(num_entities, synonyms)
        lattice = build_lattice(len(sizes), num_relations)
        capacity = _capacity(lattice, sizes)
        best = max(best, capacity)
        if capacity >= num_triplets:
            return synonyms, lattice
    raise InfeasibleConfigError(
        f"cannot plant {num_triplets} distinct triplets over {num_entities} entities "
        f"and {num_relations} relations (at most {best} available)"
    )


def split_videos(
    num_videos: int, train_fraction: float, test_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded (train, test) video ids; whatever is left over is held out."""
    order = rng.permutation(num_videos)
    n_train = int(round(train_fraction * num_videos))
    n_test = min(int(round(test_fraction * num_videos)), num_videos - n_train)
    return np.sort(order[:n_train]), np.sort(order[n_train : n_train + n_test])


def noisy_tails(
    candidates: np.ndarray,
    positions: np.ndarray,
    offsets: np.ndarray,
    class_of_entity: np.ndarray,
    members: list[np.ndarray],
    noise: np.ndarray,
    picks: np.ndarray,
) -> np.ndarray:
    """Tail of every candidate after snapping its noisy target to the nearest class.

    `noise` holds σ·ε per candidate and `picks` a uniform draw in [0, 1) choosing the
    member of a class the tail moved into. Tails that stay in their class are kept.
    """
    heads, relations, tails = candidates.T
    head_classes = class_of_entity[heads]
    targets = positions[head_classes] + offsets[relations] + noise
    out = tails.copy()
    for start in range(0, len(candidates), SNAP_CHUNK):
        rows = slice(start, start + SNAP_CHUNK)
        d2 = np.sum((targets[rows, None, :] - positions[None, :, :]) ** 2, axis=2)
        d2[np.arange(len(d2)), head_classes[rows]] = np.inf
        nearest = np.argmin(d2, axis=1)
        moved = np.flatnonzero(nearest != class_of_entity[tails[rows]])
        for i in moved.tolist():
            group = members[int(nearest[i])]
            out[start + i] = group[int(picks[start + i] * len(group))]
    return out


def _sample_triplets(
    candidates: np.ndarray, tails: np.ndarray, order: np.ndarray, count: int
) -> tuple[np.ndarray, int]:
    """First `count` distinct triplets in `order`; a moved tail colliding falls back to clean."""
    taken: set[tuple[int, int, int]] = set()
    rows: list[tuple[int, int, int]] = []
    fallbacks = 0
    for i in order.tolist():
        h, r, clean = candidates[i].tolist()
        free = [t for t in (int(tails[i]), clean) if (h, r, t) not in taken]
        if not free:
            continue
        t = free[0]
        if t != tails[i]:
            fallbacks += 1
        taken.add((h, r, t))
        rows.append((h, r, t))
        if len(rows) == count:
            break
    if len(rows) < count:
        raise InfeasibleConfigError(
            f"only {len(rows)} distinct noisy triplets could be planted, {count} requested"
        )
    return np.asarray(rows, dtype=np.int64), fallbacks


def _names(prefix: str, count: int) -> tuple[str, ...]:
    width = len(str(max(count - 1, 0)))
    return tuple(f"{prefix}_{i:0{width}d}" for i in range(count))


def gen_synthetic(cfg: SynthConfig) -> Dataset:
    E, R, d = cfg.num_entities, cfg.num_relations, cfg.latent_dim
    if E < 2:
        raise InfeasibleConfigError("at least 2 entities are needed to plant triplets")
    rng = np.random.default_rng(cfg.seed)

    synonyms, lattice = choose_synonyms(E, R, cfg.num_triplets)
    sizes = _class_sizes(E, synonyms)
    logger.info(
        f"[SYNTH] {lattice.num_classes} classes of up to {synonyms} synonyms, "
        f"{len(lattice.edges)} class edges"
    )

    # entity -> class, shuffled so ids carry no structure
    permutation = rng.permutation(E)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    members = [np.sort(permutation[starts[c] : starts[c + 1]]) for c in range(len(sizes))]
    class_of_entity = np.empty(E, dtype=np.int64)
    for c, group in enumerate(members):
        class_of_entity[group] = c

    offsets = _quantize(rng.normal(0.0, 1.0, size=(R, d)))
    bases = _quantize(rng.normal(0.0, BASE_SCALE, size=(len(lattice.root_relations), d)))
    positions = bases[lattice.roots].copy()
    for axis in range(lattice.coords.shape[1]):
        axis_offsets = offsets[lattice.root_relations[lattice.roots, axis]]
        positions += lattice.coords[:, [axis]] * axis_offsets
    latents = positions[class_of_entity]

    candidates = np.array(
        [
            (h, r, t)
            for a, r, b in lattice.edges.tolist()
            for h in members[a].tolist()
            for t in members[b].tolist()
        ],
        dtype=np.int64,
    )
    # drawn whatever the noise level, so σ changes tails and nothing else
    order = rng.permutation(len(candidates))
    eps = rng.normal(size=(len(candidates), d))
    picks = rng.random(len(candidates))
    tails = candidates[:, 2]
    if cfg.noise_std > 0.0:
        tails = noisy_tails(
            candidates, positions, offsets, class_of_entity, members, cfg.noise_std * eps, picks
        )
    triplets, fallbacks = _sample_triplets(candidates, tails, order, cfg.num_triplets)
    if cfg.noise_std > 0.0:
        moved = int(np.sum(planted_distance(triplets, latents, offsets) > 0.0))
        logger.info(
            f"[SYNTH] noise {cfg.noise_std}: {moved} of {len(triplets)} tails moved, "
            f"{fallbacks} kept clean after a collision"
        )
    triplets = triplets[np.lexsort((triplets[:, 2], triplets[:, 1], triplets[:, 0]))]
    train, test = split(triplets, cfg.split_fraction, cfg.seed)

    heads = np.unique(triplets[:, 0])
    counts = rng.integers(
        cfg.min_videos_per_head, cfg.max_videos_per_head + 1, size=len(heads)
    )
    entity_of_video = np.repeat(heads, counts)
    num_videos = len(entity_of_video)

    blocks = []
    noise = cfg.effective_feature_noise
    for dim in (cfg.frames_dim, cfg.audio_dim, cfg.text_dim):
        weights = rng.normal(0.0, 1.0 / math.sqrt(d), size=(dim, d))
        bias = rng.normal(0.0, FEATURE_BIAS_SCALE, size=dim)
        clean = latents[entity_of_video] @ weights.T + bias
        block = clean + noise * rng.normal(size=(num_videos, dim))
        blocks.append(block.astype(np.float32))

    train_videos, test_videos = split_videos(
        num_videos, cfg.video_train_fraction, cfg.video_test_fraction, rng
    )

    # tags are identified one-to-one with entities
    entity_names = _names("entity", E)
    dataset = Dataset(
        entity_names=entity_names,
        relation_names=_names("relation", R),
        train=train,
        test=test,
        tag_names=entity_names,
        entity_of_tag=np.arange(E, dtype=np.int64),
        videos=VideoTable(
            tags=entity_of_video.copy(),
            frames=blocks[0],
            audio=blocks[1],
            text=blocks[2],
        ),
        links=LinkTable(entity_of_video=entity_of_video),
        train_videos=train_videos,
        test_videos=test_videos,
        latents=latents,
        offsets=offsets,
    )
    logger.info(
        f"[SYNTH] ✓ {E} entities, {R} relations, {len(train)}/{len(test)} train/test "
        f"triplets, {num_videos} videos ({len(train_videos)}/{len(test_videos)} train/test)"
    )
    return dataset


def planted_distance(
    triplets: np.ndarray, latents: np.ndarray, offsets: np.ndarray
) -> np.ndarray:
    h, r, t = triplets.T
    return np.linalg.norm(latents[h] + offsets[r] - latents[t], axis=1)


def planted_residuals(dataset: Dataset) -> np.ndarray:
    """‖latent(h) + offset(r) - latent(t)‖₂ for every train and test triplet."""
    if dataset.latents is None or dataset.offsets is None:
        raise ValueError("dataset carries no planted latents")
    return planted_distance(dataset.all_triplets, dataset.latents, dataset.offsets)
