"""Embedding tables and 2-D principal-component projections as CSV."""

import csv
import logging
from pathlib import Path

import numpy as np

from src.datamodel.models import Dataset
from src.errors import DataFormatError

logger = logging.getLogger(__name__)

MIN_PROJECTION_POINTS = 3


def write_embeddings(path: str | Path, ids: np.ndarray, vectors: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["id", *(f"dim_{i}" for i in range(vectors.shape[1]))])
        for row_id, vector in zip(ids.tolist(), vectors.tolist()):
            writer.writerow([row_id, *(repr(float(x)) for x in vector)])
    logger.info(f"[EXPORT] ✓ wrote {len(ids)} embeddings of dim {vectors.shape[1]} to {path}")
    return path


def read_embeddings(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of `write_embeddings`: (ids, vectors)."""
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or header[0] != "id":
            raise DataFormatError("not an embeddings file", path=str(path))
        ids, rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFormatError(
                    f"expected {len(header)} fields, got {len(row)}", path=str(path), line=line_no
                )
            ids.append(int(row[0]))
            rows.append([float(x) for x in row[1:]])
    return np.asarray(ids, dtype=np.int64), np.asarray(rows, dtype=np.float64).reshape(
        len(ids), len(header) - 1
    )


def principal_components(points: np.ndarray, components: int = 2) -> np.ndarray:
    """Coordinates on the top principal axes of the centred points.

    Each axis is signed so that its largest-magnitude loading is positive.
    """
    if len(points) < MIN_PROJECTION_POINTS:
        raise DataFormatError(
            f"projection needs at least {MIN_PROJECTION_POINTS} points, got {len(points)}"
        )
    centred = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(centred, full_matrices=False)
    axes = vt[:components]
    if len(axes) < components:
        axes = np.vstack([axes, np.zeros((components - len(axes), points.shape[1]))])
    for axis in axes:
        if axis.any() and axis[np.argmax(np.abs(axis))] < 0:
            axis *= -1.0
    return centred @ axes.T


def select_videos(dataset: Dataset, tag_names: list[str] | None = None) -> np.ndarray:
    """Videos whose tag is in `tag_names` (every video when None)."""
    if dataset.videos is None:
        raise DataFormatError("projection needs a dataset with videos")
    if tag_names is None:
        return np.arange(dataset.num_videos)
    unknown = sorted(set(tag_names) - set(dataset.tag_names))
    if unknown:
        raise DataFormatError(f"unknown tags: {', '.join(unknown)}")
    wanted = [dataset.tag_names.index(name) for name in tag_names]
    selected = np.flatnonzero(np.isin(dataset.videos.tags, wanted))
    if len(selected) == 0:
        raise DataFormatError("tag selection matches no videos")
    return selected


def write_projection(
    path: str | Path, dataset: Dataset, videos: np.ndarray, embeddings: np.ndarray
) -> Path:
    """(video_id, tag, pc1, pc2) rows for external plotting."""
    assert dataset.videos is not None
    coords = principal_components(embeddings)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["video_id", "tag", "pc1", "pc2"])
        for video, (x, y) in zip(videos.tolist(), coords.tolist()):
            tag = dataset.tag_names[int(dataset.videos.tags[video])]
            writer.writerow([video, tag, repr(float(x)), repr(float(y))])
    logger.info(f"[EXPORT] ✓ wrote 2-D projection of {len(videos)} videos to {path}")
    return path
