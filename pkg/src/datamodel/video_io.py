"""Dataset directory I/O: id files, triplet splits, video manifest, feature blob, links."""

import csv
import logging
import struct
from pathlib import Path

import numpy as np

from src.datamodel.models import Dataset, LinkTable, VideoTable
from src.datamodel.triplet_io import NameIndex, format_triplets, intern_triplets, read_triplet_rows
from src.errors import DataFormatError

logger = logging.getLogger(__name__)

ENTITIES_FILE = "entities.tsv"
RELATIONS_FILE = "relations.tsv"
TRAIN_FILE = "train.tsv"
TEST_FILE = "test.tsv"
VIDEOS_FILE = "videos.tsv"
FEATURES_FILE = "features.bin"
LINKS_FILE = "links.tsv"
TAGS_FILE = "tags.tsv"

FEATURE_MAGIC = b"VKGFEAT\0"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<8sIIIII")

SPLITS = ("train", "test", "holdout")


def _read_rows(path: Path, width: int) -> list[tuple[int, list[str]]]:
    rows = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        for line_no, row in enumerate(reader, start=1):
            if not row or not "".join(row).strip():
                continue
            if len(row) != width or not all(row):
                raise DataFormatError(
                    f"expected {width} tab-separated fields, got {len(row)}",
                    path=str(path),
                    line=line_no,
                )
            rows.append((line_no, row))
    return rows


def _write_rows(path: Path, rows: list[tuple[object, ...]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE)
        writer.writerows(rows)


def _read_id_file(path: Path) -> tuple[str, ...]:
    names: list[str] = []
    for line_no, (raw_id, name) in _read_rows(path, 2):
        if not raw_id.isdigit() or int(raw_id) != len(names):
            raise DataFormatError(
                f"ids must be dense and in order, expected {len(names)}",
                path=str(path),
                line=line_no,
            )
        names.append(name)
    return tuple(names)


def write_features(path: Path, videos: VideoTable) -> None:
    frames_dim, audio_dim, text_dim = videos.dims
    row_bytes = 4 * (frames_dim + audio_dim + text_dim)
    offsets = np.arange(len(videos), dtype="<u8") * row_bytes
    payload = np.ascontiguousarray(videos.features, dtype="<f4")
    with open(path, "wb") as f:
        f.write(
            _HEADER.pack(
                FEATURE_MAGIC, FEATURE_VERSION, len(videos), frames_dim, audio_dim, text_dim
            )
        )
        f.write(offsets.tobytes())
        f.write(payload.tobytes())


def read_features(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return the (frames, audio, text) float32 blocks stored in a feature blob."""
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise DataFormatError("feature blob is truncated", path=str(path))
    magic, version, count, frames_dim, audio_dim, text_dim = _HEADER.unpack_from(blob)
    if magic != FEATURE_MAGIC:
        raise DataFormatError("not a feature blob (bad magic)", path=str(path))
    if version != FEATURE_VERSION:
        raise DataFormatError(
            f"unsupported feature blob version {version} (expected {FEATURE_VERSION})",
            path=str(path),
        )
    width = frames_dim + audio_dim + text_dim
    index_end = _HEADER.size + 8 * count
    if len(blob) != index_end + 4 * width * count:
        raise DataFormatError("feature blob size does not match its header", path=str(path))
    offsets = np.frombuffer(blob, dtype="<u8", count=count, offset=_HEADER.size)
    payload = np.frombuffer(blob, dtype="<f4", offset=index_end)
    rows = np.empty((count, width), dtype=np.float32)
    for video, offset in enumerate(offsets.tolist()):
        if offset % 4 or offset + 4 * width > 4 * len(payload):
            raise DataFormatError(f"bad offset for video {video}", path=str(path))
        start = offset // 4
        rows[video] = payload[start : start + width]
    return (
        rows[:, :frames_dim].copy(),
        rows[:, frames_dim : frames_dim + audio_dim].copy(),
        rows[:, frames_dim + audio_dim :].copy(),
    )


def write_dataset_dir(dataset: Dataset, out_dir: str | Path) -> Path:
    """Write every file of the dataset directory format; returns the directory."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataFormatError(f"cannot create output directory: {e}", path=str(out)) from e

    _write_rows(out / ENTITIES_FILE, list(enumerate(dataset.entity_names)))
    _write_rows(out / RELATIONS_FILE, list(enumerate(dataset.relation_names)))
    (out / TRAIN_FILE).write_text(format_triplets(dataset, dataset.train), encoding="utf-8")
    (out / TEST_FILE).write_text(format_triplets(dataset, dataset.test), encoding="utf-8")

    if dataset.num_tags:
        tag_rows = [
            (tag, dataset.entity_names[entity])
            for tag, entity in zip(dataset.tag_names, dataset.entity_of_tag.tolist())
            if entity >= 0
        ]
        _write_rows(out / TAGS_FILE, tag_rows)

    if dataset.videos is not None and dataset.links is not None:
        split_of = np.full(dataset.num_videos, "holdout", dtype=object)
        split_of[dataset.train_videos] = "train"
        split_of[dataset.test_videos] = "test"
        _write_rows(
            out / VIDEOS_FILE,
            [
                (video, dataset.tag_names[tag], split_of[video])
                for video, tag in enumerate(dataset.videos.tags.tolist())
            ],
        )
        write_features(out / FEATURES_FILE, dataset.videos)
        _write_rows(
            out / LINKS_FILE,
            [
                (video, dataset.entity_names[entity])
                for video, entity in enumerate(dataset.links.entity_of_video.tolist())
                if entity >= 0
            ],
        )
    logger.info(f"[LOADER] ✓ wrote dataset to {out}")
    return out


def load_dataset_dir(data_dir: str | Path) -> Dataset:
    """Read a directory written by `write_dataset_dir` (video files are optional)."""
    root = Path(data_dir)
    if not (root / TRAIN_FILE).exists():
        raise DataFormatError("dataset directory has no train.tsv", path=str(root))

    entities = NameIndex(
        _read_id_file(root / ENTITIES_FILE) if (root / ENTITIES_FILE).exists() else ()
    )
    relations = NameIndex(
        _read_id_file(root / RELATIONS_FILE) if (root / RELATIONS_FILE).exists() else ()
    )
    train = intern_triplets(read_triplet_rows(root / TRAIN_FILE), entities, relations)
    test_path = root / TEST_FILE
    test = (
        intern_triplets(read_triplet_rows(test_path), entities, relations)
        if test_path.exists()
        else np.zeros((0, 3), dtype=np.int64)
    )
    if len(train) + len(test) == 0:
        raise DataFormatError("dataset holds no triplets", path=str(root))
    tags = NameIndex()
    entity_of_tag: list[int] = []
    if (root / TAGS_FILE).exists():
        for line_no, (tag, entity) in _read_rows(root / TAGS_FILE, 2):
            entity_id = entities.get(entity)
            if entity_id is None:
                raise DataFormatError(
                    f"unknown entity '{entity}'", path=str(root / TAGS_FILE), line=line_no
                )
            tags.intern(tag)
            entity_of_tag.append(entity_id)

    videos = links = None
    train_videos: list[int] = []
    test_videos: list[int] = []
    if (root / VIDEOS_FILE).exists():
        manifest = _read_rows(root / VIDEOS_FILE, 3)
        video_tags = []
        for line_no, (raw_id, tag, split) in manifest:
            if not raw_id.isdigit() or int(raw_id) != len(video_tags):
                raise DataFormatError(
                    "video ids must be dense and in order",
                    path=str(root / VIDEOS_FILE),
                    line=line_no,
                )
            if split not in SPLITS:
                raise DataFormatError(
                    f"unknown split '{split}'", path=str(root / VIDEOS_FILE), line=line_no
                )
            if tags.get(tag) is None:
                tags.intern(tag)
                entity_of_tag.append(-1)
            video_tags.append(tags.get(tag))
            if split == "train":
                train_videos.append(len(video_tags) - 1)
            elif split == "test":
                test_videos.append(len(video_tags) - 1)

        frames, audio, text = read_features(root / FEATURES_FILE)
        if len(frames) != len(video_tags):
            raise DataFormatError(
                f"feature blob holds {len(frames)} videos, manifest lists {len(video_tags)}",
                path=str(root / FEATURES_FILE),
            )
        videos = VideoTable(
            tags=np.asarray(video_tags, dtype=np.int64), frames=frames, audio=audio, text=text
        )

        entity_of_video = np.full(len(video_tags), -1, dtype=np.int64)
        if (root / LINKS_FILE).exists():
            for line_no, (raw_id, entity) in _read_rows(root / LINKS_FILE, 2):
                video = int(raw_id) if raw_id.isdigit() else -1
                entity_id = entities.get(entity)
                if not 0 <= video < len(video_tags) or entity_id is None:
                    raise DataFormatError(
                        f"bad link '{raw_id}' -> '{entity}'",
                        path=str(root / LINKS_FILE),
                        line=line_no,
                    )
                if entity_of_video[video] >= 0:
                    raise DataFormatError(
                        f"video {video} is linked twice", path=str(root / LINKS_FILE), line=line_no
                    )
                entity_of_video[video] = entity_id
        links = LinkTable(entity_of_video=entity_of_video)
        unlinked = int(np.sum(entity_of_video < 0))
        if unlinked:
            logger.warning(f"[LOADER] {unlinked} videos have no linked entity")

    dataset = Dataset(
        entity_names=entities.names(),
        relation_names=relations.names(),
        train=train,
        test=test,
        tag_names=tags.names(),
        entity_of_tag=np.asarray(entity_of_tag, dtype=np.int64),
        videos=videos,
        links=links,
        train_videos=np.asarray(train_videos, dtype=np.int64),
        test_videos=np.asarray(test_videos, dtype=np.int64),
    )
    missing = dataset.heads_without_videos()
    if missing:
        logger.warning(f"[LOADER] {len(missing)} head entities have no linked video")
    logger.info(
        f"[LOADER] ✓ {root}: {dataset.num_entities} entities, {dataset.num_relations} "
        f"relations, {len(train)}/{len(test)} triplets, {dataset.num_videos} videos"
    )
    return dataset
