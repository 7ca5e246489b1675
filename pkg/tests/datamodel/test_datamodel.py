"""
test_datamodel.py - planted generator, triplet TSV loader and dataset directories
"""

import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from src.datamodel.models import Dataset, SynthConfig
from src.datamodel.synthetic import choose_synonyms, gen_synthetic, planted_residuals
from src.datamodel.triplet_io import load_triplets, split, with_split, write_triplets
from src.datamodel.video_io import (
    FEATURES_FILE,
    TRAIN_FILE,
    VIDEOS_FILE,
    load_dataset_dir,
    write_dataset_dir,
)
from src.errors import DataFormatError, InfeasibleConfigError
from tests.conftest import small_synth_config


class TestSyntheticGenerator:
    """Test the seeded planted generator."""

    def test_counts_and_split(self, planted: Dataset) -> None:
        """Requested triplet count is split 90/10 and holds no duplicates."""
        assert len(planted.train) == 54
        assert len(planted.test) == 6
        rows = {tuple(row) for row in planted.all_triplets.tolist()}
        assert len(rows) == 60

    def test_same_seed_same_dataset(self) -> None:
        """Two runs with one seed agree byte for byte; another seed differs."""
        first: Dataset = gen_synthetic(small_synth_config())
        second: Dataset = gen_synthetic(small_synth_config())
        other: Dataset = gen_synthetic(small_synth_config(seed=4))
        assert first.fingerprint() == second.fingerprint()
        assert first.fingerprint() != other.fingerprint()

    def test_noise_free_residuals_are_exactly_zero(self, planted: Dataset) -> None:
        """Without noise every planted triplet satisfies h + r = t exactly."""
        residuals = planted_residuals(planted)
        assert residuals.shape == (60,)
        assert np.all(residuals == 0.0)

    def test_noisy_residuals_are_positive(self) -> None:
        """Tail noise breaks exact translation for some triplets."""
        noisy = gen_synthetic(small_synth_config(noise_std=2.0))
        assert planted_residuals(noisy).max() > 0.0

    def test_noise_level_controls_moved_tails(self) -> None:
        """Scaling one noise draw moves more tails out of their planted class."""
        moved = [
            np.mean(planted_residuals(gen_synthetic(small_synth_config(noise_std=sigma))) > 0)
            for sigma in (0.25, 1.0, 4.0)
        ]
        assert moved[0] < moved[1] < moved[2]

    def test_residual_statistic_at_full_scale(self) -> None:
        """With σ = 1 the mean residual over 1000 triplets stays within 3σ√d."""
        cfg = SynthConfig(noise_std=1.0, feature_noise_std=0.0)
        residuals = planted_residuals(gen_synthetic(cfg))
        assert len(residuals) == 1000
        assert 0.0 < residuals.mean() <= 3.0 * cfg.noise_std * math.sqrt(cfg.latent_dim)

    def test_full_scale_video_links(self) -> None:
        """200 entities, 10 relations, 1000 triplets: every head has one to five videos."""
        dataset = gen_synthetic(SynthConfig(max_videos_per_head=5))
        assert (dataset.num_entities, dataset.num_relations) == (200, 10)
        assert len(dataset.all_triplets) == 1000
        assert dataset.links is not None and dataset.videos is not None
        for head in np.unique(dataset.all_triplets[:, 0]).tolist():
            assert 1 <= len(dataset.links.videos(head)) <= 5
        assert len(dataset.videos.tags) == dataset.num_videos
        tagged = dataset.entity_of_tag[dataset.videos.tags]
        assert np.array_equal(tagged, dataset.links.entity_of_video)

    def test_every_head_has_a_video(self, planted: Dataset) -> None:
        """Link-table closure holds for generated data."""
        assert planted.heads_without_videos() == []
        assert planted.links is not None
        for video, entity in enumerate(planted.links.entity_of_video.tolist()):
            assert planted.entity_of_tag[planted.videos.tags[video]] == entity

    def test_features_are_float32(self, planted: Dataset) -> None:
        """Modality blocks are stored as float32 with the configured widths."""
        assert planted.videos is not None
        assert planted.videos.frames.dtype == np.float32
        assert planted.videos.dims == (6, 4, 4)

    def test_video_splits_are_disjoint(self, planted: Dataset) -> None:
        """Train and test video ids never overlap."""
        assert not set(planted.train_videos.tolist()) & set(planted.test_videos.tolist())
        assert len(planted.test_videos) > 0

    def test_infeasible_request_raises(self) -> None:
        """Too many triplets for the entity count is reported before sampling."""
        with pytest.raises(InfeasibleConfigError):
            gen_synthetic(SynthConfig(num_entities=3, num_relations=1, num_triplets=100))

    def test_synonyms_grow_with_density(self) -> None:
        """Denser graphs need larger synonym classes."""
        sparse, _ = choose_synonyms(30, 3, 20)
        dense, _ = choose_synonyms(30, 3, 200)
        assert sparse <= dense

    def test_invalid_fractions_rejected(self) -> None:
        """Video fractions may not exceed one in total."""
        with pytest.raises(ValueError):
            SynthConfig(video_train_fraction=0.8, video_test_fraction=0.5)


class TestTripletLoader:
    """Test the three-column TSV loader."""

    def test_load_interns_and_deduplicates(self, tmp_path: Path) -> None:
        """Names get dense ids in first-appearance order; duplicates are dropped."""
        path = tmp_path / "kg.tsv"
        path.write_text("a\tlikes\tb\nb\tlikes\tc\n\na\tlikes\tb\n", encoding="utf-8")
        dataset = load_triplets(path)
        assert dataset.entity_names == ("a", "b", "c")
        assert dataset.relation_names == ("likes",)
        assert dataset.train.tolist() == [[0, 0, 1], [1, 0, 2]]

    def test_malformed_line_reports_position(self, tmp_path: Path) -> None:
        """A row with the wrong field count names its file and line."""
        path = tmp_path / "kg.tsv"
        path.write_text("a\tlikes\tb\na\tlikes\n", encoding="utf-8")
        with pytest.raises(DataFormatError) as excinfo:
            load_triplets(path)
        assert excinfo.value.line == 2
        assert "kg.tsv:2" in str(excinfo.value)

    def test_missing_and_empty_files(self, tmp_path: Path) -> None:
        """Missing and empty files are data errors."""
        with pytest.raises(DataFormatError):
            load_triplets(tmp_path / "absent.tsv")
        empty = tmp_path / "empty.tsv"
        empty.write_text("\n\n", encoding="utf-8")
        with pytest.raises(DataFormatError):
            load_triplets(empty)

    def test_write_then_load_keeps_triplets(self, tmp_path: Path, planted: Dataset) -> None:
        """Writing all triplets and reloading keeps every named triplet."""
        path = tmp_path / "all.tsv"
        write_triplets(planted, path)
        reloaded = load_triplets(path)
        named = {
            (reloaded.entity_names[h], reloaded.relation_names[r], reloaded.entity_names[t])
            for h, r, t in reloaded.train.tolist()
        }
        original = {
            (planted.entity_names[h], planted.relation_names[r], planted.entity_names[t])
            for h, r, t in planted.all_triplets.tolist()
        }
        assert named == original

    def test_with_split_is_seeded(self, toy: Dataset) -> None:
        """Re-splitting keeps every triplet and is reproducible."""
        first = with_split(toy, 0.5, seed=1)
        second = with_split(toy, 0.5, seed=1)
        assert len(first.train) + len(first.test) == len(toy.all_triplets)
        assert np.array_equal(first.train, second.train)
        assert np.array_equal(first.test, second.test)

    def test_split_sizes(self) -> None:
        """100 rows at fraction 0.9 give 90 train and 10 disjoint test rows."""
        ids = np.arange(100)
        triplets = np.stack([ids, np.zeros(100, dtype=np.int64), ids], axis=1)
        train, test = split(triplets, 0.9, seed=4)
        assert (len(train), len(test)) == (90, 10)
        assert not set(train[:, 0].tolist()) & set(test[:, 0].tolist())
        with pytest.raises(ValueError):
            split(triplets, 1.0, seed=4)


class TestDatasetDirectory:
    """Test the dataset directory writer and loader."""

    def test_write_then_load(self, tmp_path: Path, planted: Dataset) -> None:
        """Every table survives a write and reload exactly."""
        write_dataset_dir(planted, tmp_path / "data")
        loaded = load_dataset_dir(tmp_path / "data")
        assert loaded.entity_names == planted.entity_names
        assert loaded.relation_names == planted.relation_names
        assert loaded.tag_names == planted.tag_names
        assert np.array_equal(loaded.train, planted.train)
        assert np.array_equal(loaded.test, planted.test)
        assert np.array_equal(loaded.entity_of_tag, planted.entity_of_tag)
        assert np.array_equal(loaded.videos.tags, planted.videos.tags)
        assert np.array_equal(loaded.videos.frames, planted.videos.frames)
        assert np.array_equal(loaded.videos.text, planted.videos.text)
        assert np.array_equal(loaded.links.entity_of_video, planted.links.entity_of_video)
        assert np.array_equal(loaded.train_videos, planted.train_videos)
        assert np.array_equal(loaded.test_videos, planted.test_videos)

    def test_regeneration_is_byte_identical(self, tmp_path: Path) -> None:
        """Generating with one seed twice writes identical files."""
        first = write_dataset_dir(gen_synthetic(small_synth_config()), tmp_path / "a")
        second = write_dataset_dir(gen_synthetic(small_synth_config()), tmp_path / "b")
        names = sorted(p.name for p in first.iterdir())
        assert names == sorted(p.name for p in second.iterdir())
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_truncated_feature_blob(self, tmp_path: Path, planted: Dataset) -> None:
        """A feature blob shorter than its header promises is rejected."""
        out = write_dataset_dir(planted, tmp_path / "data")
        blob = (out / FEATURES_FILE).read_bytes()
        (out / FEATURES_FILE).write_bytes(blob[:-4])
        with pytest.raises(DataFormatError):
            load_dataset_dir(out)

    def test_unknown_split_in_manifest(self, tmp_path: Path, planted: Dataset) -> None:
        """Video splits other than train, test and holdout are rejected with a line number."""
        out = write_dataset_dir(planted, tmp_path / "data")
        lines = (out / VIDEOS_FILE).read_text(encoding="utf-8").splitlines()
        fields = lines[0].split("\t")
        lines[0] = "\t".join([fields[0], fields[1], "validation"])
        (out / VIDEOS_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(DataFormatError) as excinfo:
            load_dataset_dir(out)
        assert excinfo.value.line == 1

    def test_missing_train_file(self, tmp_path: Path) -> None:
        """A directory without train.tsv is not a dataset."""
        with pytest.raises(DataFormatError):
            load_dataset_dir(tmp_path)

    def test_triplets_only_directory(self, tmp_path: Path) -> None:
        """Video files are optional."""
        (tmp_path / TRAIN_FILE).write_text("a\tr\tb\n", encoding="utf-8")
        dataset = load_dataset_dir(tmp_path)
        assert not dataset.has_videos
        assert dataset.num_entities == 2


class TestDatasetModel:
    """Test Dataset invariants and derived indices."""

    def test_true_tails_and_heads(self, toy: Dataset) -> None:
        """Filtering indices cover train and test triplets."""
        assert toy.true_tails[(0, 0)] == frozenset({1})
        assert toy.true_tails[(4, 0)] == frozenset({5})
        assert toy.true_heads[(1, 3)] == frozenset({2, 1})

    def test_tag_of_entity_inverts_identification(self, toy: Dataset) -> None:
        """tag_of_entity is the inverse of entity_of_tag."""
        assert toy.tag_of_entity.tolist() == list(range(6))

    def test_non_injective_tags_rejected(self) -> None:
        """Two tags may not name the same entity."""
        with pytest.raises(DataFormatError):
            Dataset(
                entity_names=("a", "b"),
                relation_names=("r",),
                tag_names=("x", "y"),
                entity_of_tag=np.array([0, 0]),
            )

    def test_unknown_entity_rejected(self) -> None:
        """Triplets must reference known ids."""
        with pytest.raises(DataFormatError):
            Dataset(entity_names=("a", "b"), relation_names=("r",), train=np.array([[0, 0, 5]]))

    def test_overlapping_triplet_splits_rejected(self, toy: Dataset) -> None:
        """A triplet may not sit in both train and test."""
        with pytest.raises(DataFormatError, match="both train and test"):
            replace(toy, test=np.concatenate([toy.test, toy.train[:1]]))

    def test_overlapping_video_splits_rejected(self, toy: Dataset) -> None:
        """A video may not sit in both the train and the test split."""
        with pytest.raises(DataFormatError, match="videos appear"):
            replace(toy, test_videos=np.concatenate([toy.test_videos, toy.train_videos[:1]]))

    def test_with_split_partitions_triplets(self, toy: Dataset) -> None:
        """Re-splitting goes through the same check and stays disjoint."""
        resplit = with_split(toy, 0.5, seed=1)
        train = {tuple(row) for row in resplit.train.tolist()}
        assert not train & {tuple(row) for row in resplit.test.tolist()}

    def test_arrays_are_read_only(self, toy: Dataset) -> None:
        """Stored arrays cannot be mutated in place."""
        with pytest.raises(ValueError):
            toy.train[0, 0] = 3
