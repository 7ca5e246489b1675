"""
test_evaluation.py - rank rule, metrics, the five ranking tasks and result files
"""

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from src.datamodel.models import Dataset, LinkTable
from src.errors import CapabilityError, ConfigError, DataFormatError
from src.evaluation.ranking import RankResult, Task, expand_tasks, metrics, rank_of
from src.evaluation.results import (
    RANK_COLUMNS,
    RESULT_COLUMNS,
    read_results,
    result_rows,
    write_rank_dump,
    write_results,
)
from src.evaluation.tasks import (
    JointScorer,
    KgeScorer,
    Scorer,
    VrvScores,
    eval_trt,
    eval_tv,
    eval_vrt,
    eval_vrv,
    eval_vt,
    evaluate,
    link_queries,
)
from src.kge.models import build_kge_model
from src.training.state import ModelState
from tests.conftest import tiny_train_config, toy_dataset

TEN_ENTITY_TRAIN = (
    (0, 0, 1),
    (0, 0, 2),
    (1, 1, 3),
    (2, 1, 3),
    (3, 0, 4),
    (4, 0, 5),
    (5, 0, 6),
    (6, 1, 7),
    (7, 1, 8),
    (8, 0, 9),
    (9, 1, 0),
)
TEN_ENTITY_TEST = ((0, 0, 3), (2, 1, 4), (4, 0, 8), (9, 1, 3), (6, 1, 0))


def brute_rank(distances: list[float], target: int, exclude: set[int] = frozenset()) -> int:
    best = distances[target]
    return 1 + sum(
        1 for e, d in enumerate(distances) if e != target and e not in exclude and d < best
    )


def ten_entity_toy() -> Dataset:
    return toy_dataset(num_entities=10, train=TEN_ENTITY_TRAIN, test=TEN_ENTITY_TEST)


class TestRankRule:
    """Test rank_of and metric aggregation."""

    def test_examples(self) -> None:
        """Best target, ties and multi-target queries."""
        assert rank_of(np.array([0.1, 0.5, 0.9]), [0]) == 1
        assert rank_of(np.full(5, 0.3), [2]) == 1
        assert rank_of(np.array([0.0, 0.6, 0.2, 0.1, 0.3, 0.4]), [1, 2]) == 3
        assert rank_of(np.array([0.9, 0.1, 0.5]), [2], higher_is_better=True) == 2

    def test_exclusion(self) -> None:
        """Excluded candidates never outrank the target; targets are never excluded."""
        scores = np.array([0.1, 0.2, 0.3])
        assert rank_of(scores, [2], exclude=[0, 2]) == 2
        assert rank_of(scores, [2], exclude=[0, 1]) == 1

    def test_empty_targets(self) -> None:
        """A query must have a target."""
        with pytest.raises(DataFormatError):
            rank_of(np.zeros(3), [])

    def test_metric_oracle(self) -> None:
        """Ranks 1, 5, 20 give MR 8.6667 and HITS 1/3, 1/3, 2/3."""
        m = metrics([1, 5, 20])
        assert m.mr == pytest.approx(8.6667, abs=1e-4)
        assert m.hits1 == pytest.approx(1 / 3)
        assert m.hits3 == pytest.approx(1 / 3)
        assert m.hits10 == pytest.approx(2 / 3)

    def test_perfect_and_monotone(self) -> None:
        """All-ones ranks are perfect; HITS@n never decreases in n."""
        perfect = metrics([1, 1, 1])
        assert (perfect.mr, perfect.hits1, perfect.hits10) == (1.0, 1.0, 1.0)
        ranks = np.random.default_rng(0).integers(1, 30, size=50)
        m = metrics(ranks)
        assert m.mr >= 1.0
        assert m.hits1 <= m.hits3 <= m.hits10

    def test_query_order_irrelevant(self) -> None:
        """Metrics are invariant under query permutation."""
        ranks = np.array([4, 1, 12, 2, 7])
        assert metrics(ranks) == metrics(ranks[::-1])

    def test_empty_ranks(self) -> None:
        """Aggregating nothing is an error."""
        with pytest.raises(DataFormatError):
            metrics([])

    def test_duplicated_candidates_keep_hits_at_one(self) -> None:
        """Duplicating every candidate never changes whether a target ranks first."""
        rng = np.random.default_rng(1)
        for _ in range(50):
            scores = rng.normal(size=12)
            targets = rng.choice(12, size=2, replace=False)
            doubled = np.concatenate([scores, scores])
            both = np.concatenate([targets, targets + 12])
            assert (rank_of(scores, targets) == 1) == (rank_of(doubled, both) == 1)

    def test_expand_tasks(self) -> None:
        """trt expands to both directions; repeats collapse; unknown names fail."""
        assert expand_tasks(["trt", "vt", "trt"]) == [Task.TRT_HEAD, Task.TRT_TAIL, Task.VT]
        with pytest.raises(ConfigError):
            expand_tasks(["vtt"])


class TestTripletRanking:
    """Test TRT head and tail prediction."""

    @pytest.mark.parametrize("variant", ["transe", "transh", "transr"])
    def test_matches_brute_force(self, variant: str) -> None:
        """Harness ranks equal exhaustive per-entity scoring, raw and filtered."""
        dataset = ten_entity_toy()
        model = build_kge_model(variant, 10, 2, 4, np.random.default_rng(2))
        results = eval_trt(KgeScorer(model), dataset)
        by_key = {(r.task, r.mode): r.ranks.tolist() for r in results}
        expected: dict = {key: [] for key in by_key}
        for h, r, t in dataset.test.tolist():
            tails = [model.score(h, r, e) for e in range(10)]
            heads = [model.score(e, r, t) for e in range(10)]
            expected[(Task.TRT_TAIL, "raw")].append(brute_rank(tails, t))
            expected[(Task.TRT_HEAD, "raw")].append(brute_rank(heads, h))
            expected[(Task.TRT_TAIL, "filtered")].append(
                brute_rank(tails, t, set(dataset.true_tails[(h, r)]))
            )
            expected[(Task.TRT_HEAD, "filtered")].append(
                brute_rank(heads, h, set(dataset.true_heads[(r, t)]))
            )
        assert by_key == expected

    def test_filtered_never_worse(self) -> None:
        """Removing true answers can only improve a rank."""
        dataset = ten_entity_toy()
        model = build_kge_model("transe", 10, 2, 4, np.random.default_rng(3))
        results = eval_trt(KgeScorer(model), dataset, dataset.all_triplets)
        for task in (Task.TRT_HEAD, Task.TRT_TAIL):
            raw = next(r for r in results if r.task == task and r.mode == "raw")
            filtered = next(r for r in results if r.task == task and r.mode == "filtered")
            assert np.all(filtered.ranks <= raw.ranks)

    def test_untagged_entities_are_skipped_by_joint_model(self, toy: Dataset) -> None:
        """The joint model cannot place entities without a tag."""
        extended = replace(
            toy,
            entity_names=toy.entity_names + ("orphan",),
            test=np.array([[4, 0, 5], [1, 1, 6]]),
        )
        state = ModelState.init(extended, tiny_train_config(), seed=0)
        head, tail = eval_trt(JointScorer(state, extended), extended, modes=("raw",))
        assert (head.queries, head.skipped) == (1, 1)
        assert (tail.queries, tail.skipped) == (1, 1)


class TestVideoTasks:
    """Test VT, TV, VRT and VRV on the joint scorer."""

    @pytest.fixture
    def state(self, toy: Dataset) -> ModelState:
        return ModelState.init(toy, tiny_train_config(encoder="mlp"), seed=1)

    def test_vt_matches_brute_force(self, toy: Dataset, state: ModelState) -> None:
        """VT ranks every tag by cosine to the video."""
        videos = toy.test_videos
        result = eval_vt(JointScorer(state, toy), toy, videos, modes=("raw",))[0]
        zv = state.video_embeddings(toy, videos)
        zt = state.tag_embeddings()
        expected = []
        for row, video in enumerate(videos.tolist()):
            cos = [
                float(zv[row] @ zt[j] / (np.linalg.norm(zv[row]) * np.linalg.norm(zt[j])))
                for j in range(toy.num_tags)
            ]
            target = int(toy.videos.tags[video])
            expected.append(1 + sum(1 for c in cos if c > cos[target] + 1e-12))
        assert result.ranks.tolist() == expected

    def test_tv_counts_tags_without_videos(self, toy: Dataset, state: ModelState) -> None:
        """Tags borne by none of the ranked videos are skipped."""
        videos = toy.test_videos[:3]
        result = eval_tv(JointScorer(state, toy), toy, videos, modes=("raw",))[0]
        assert result.queries == 3
        assert result.skipped == toy.num_tags - 3
        assert np.all(result.ranks >= 1) and np.all(result.ranks <= 3)

    def test_vt_and_tv_filtered_equal_raw(self, toy: Dataset, state: ModelState) -> None:
        """Single-answer retrieval has nothing to filter."""
        scorer = JointScorer(state, toy)
        for run in (eval_vt, eval_tv):
            raw, filtered = run(scorer, toy, toy.test_videos)
            assert np.array_equal(raw.ranks, filtered.ranks)

    def test_vrt_matches_brute_force(self, toy: Dataset, state: ModelState) -> None:
        """VRT ranks every tag by distance from the video translated by the relation."""
        results = eval_vrt(JointScorer(state, toy), toy, toy.test_videos)
        zv = state.video_embeddings(toy)
        zt = state.tag_embeddings()
        table = state.relations.table
        raw, filtered = [], []
        for video in toy.test_videos.tolist():
            head = toy.links.entity(video)
            for h, r, t in toy.all_triplets_by_head.get(head, np.zeros((0, 3))).tolist():
                d = [float(np.linalg.norm(zv[video] + table[r] - zt[j])) for j in range(6)]
                raw.append(brute_rank(d, t))
                filtered.append(brute_rank(d, t, set(toy.true_tails[(h, r)])))
        assert results[0].ranks.tolist() == raw
        assert results[1].ranks.tolist() == filtered

    def test_vrv_matches_brute_force(self, toy: Dataset, state: ModelState) -> None:
        """VRV ranks every other video; targets are the tail's linked videos."""
        results = eval_vrv(JointScorer(state, toy), toy, toy.test_videos)
        zv = state.video_embeddings(toy)
        table = state.relations.table
        raw, filtered = [], []
        for video in toy.test_videos.tolist():
            head = toy.links.entity(video)
            for h, r, t in toy.all_triplets_by_head.get(head, np.zeros((0, 3))).tolist():
                d = np.linalg.norm(zv[video] + table[r] - zv, axis=1)
                d[video] = np.inf
                best = min(d[v] for v in toy.links.videos(t))
                raw.append(1 + int(np.sum(d < best)))
                for e in toy.true_tails[(h, r)] - {t}:
                    d[list(toy.links.videos(e))] = np.inf
                filtered.append(1 + int(np.sum(d < best)))
        assert results[0].ranks.tolist() == raw
        assert results[1].ranks.tolist() == filtered

    def test_vrv_query_video_is_not_a_candidate(self) -> None:
        """The query video neither outranks a target nor counts as one."""

        class QueryFirst(Scorer):
            method = "ours"

            def __init__(self, num_videos: int):
                self.num_videos = num_videos

            def vrv_scores(self, video: int, relation: int) -> VrvScores:
                scores = np.ones(self.num_videos)
                scores[video] = 0.0
                return VrvScores(scores, False)

        dataset = toy_dataset(num_entities=3, train=((0, 0, 0), (0, 1, 1)), test=((1, 0, 2),))
        raw, filtered = eval_vrv(QueryFirst(dataset.num_videos), dataset, np.array([1]))
        assert raw.ranks.tolist() == filtered.ranks.tolist() == [1, 1]

        single = toy_dataset(
            num_entities=3, train=((0, 0, 0), (0, 1, 1)), test=((1, 0, 2),), videos_per_entity=1
        )
        scorer = QueryFirst(single.num_videos)
        result = eval_vrv(scorer, single, np.array([0]), modes=("raw",))[0]
        assert (result.queries, result.skipped) == (1, 1)

    def test_unlinked_videos_are_skipped(self) -> None:
        """Skipped plus scored queries cover every video-triplet pair."""
        dataset = toy_dataset(unlinked=2)
        queries, skipped = link_queries(dataset, dataset.test_videos)
        assert (len(queries), skipped) == (8, 2)
        joint = ModelState.init(dataset, tiny_train_config(), seed=2)
        result = eval_vrt(JointScorer(joint, dataset), dataset, dataset.test_videos)[0]
        assert (result.queries, result.skipped) == (8, 2)

    def test_tail_without_videos_is_skipped(self, toy: Dataset) -> None:
        """A VRV query whose tail has no linked video counts as a skip, not a rank."""
        links = np.asarray(toy.links.entity_of_video).copy()
        links[links == 1] = -1
        dataset = replace(toy, links=LinkTable(entity_of_video=links))
        state = ModelState.init(dataset, tiny_train_config(), seed=3)
        result = eval_vrv(JointScorer(state, dataset), dataset, dataset.test_videos)[0]
        # video 3 is now unlinked and video 1's query towards entity 1 has no targets
        queries, unlinked = link_queries(dataset, dataset.test_videos)
        assert unlinked == 1
        assert result.skipped == unlinked + 1
        assert result.queries == len(queries) - 1

    def test_cosine_vrv_scoring(self, toy: Dataset, state: ModelState) -> None:
        """The cosine variant ranks by higher-is-better similarity."""
        scorer = JointScorer(state, toy, vrv_scoring="cosine")
        scored = scorer.vrv_scores(1, 0)
        assert scored.higher_is_better
        assert np.all(scored.scores <= 1.0 + 1e-12)

    def test_no_scorable_queries(self) -> None:
        """A task with nothing to rank is a data error."""
        dataset = toy_dataset(unlinked=1)
        state = ModelState.init(dataset, tiny_train_config(), seed=5)
        with pytest.raises(DataFormatError):
            eval_vrt(JointScorer(state, dataset), dataset, np.array([12]))

    def test_uniform_ranks_for_untrained_model(self) -> None:
        """An untrained model ranks targets near the middle on average."""
        dataset = toy_dataset(
            num_entities=20, train=((0, 0, 1),), test=((1, 0, 2),), videos_per_entity=60
        )
        state = ModelState.init(dataset, tiny_train_config(), seed=4)
        result = eval_vt(JointScorer(state, dataset), dataset, dataset.test_videos)[0]
        assert result.queries >= 500
        assert result.metrics.mr == pytest.approx(10.5, rel=0.1)

    def test_uniform_vrt_and_vrv_ranks_for_untrained_models(self) -> None:
        """Pooled over random models, VRT and VRV ranks match the uniform expectation."""
        train = tuple((e, k % 2, (e + k) % 20) for e in range(20) for k in range(1, 11))
        dataset = toy_dataset(num_entities=20, train=train, test=())
        vrt, vrv = [], []
        for seed in range(5):
            scorer = JointScorer(ModelState.init(dataset, tiny_train_config(), seed=seed), dataset)
            vrt.extend(eval_vrt(scorer, dataset, dataset.test_videos, ("raw",))[0].ranks)
            vrv.extend(eval_vrv(scorer, dataset, dataset.test_videos, ("raw",))[0].ranks)
        assert len(vrt) == len(vrv) == 1000
        # single target tag among 20 candidates
        assert np.mean(vrt) == pytest.approx(10.5, rel=0.1)
        # best of 2 target videos among the 39 other videos: 1 + 37 / 3
        assert np.mean(vrv) == pytest.approx(1.0 + 37.0 / 3.0, rel=0.1)


class TestEvaluate:
    """Test the capability-checked driver and result files."""

    def test_capability_checked_before_scoring(self, toy: Dataset) -> None:
        """Pure KGE models cannot rank videos."""
        model = build_kge_model(
            "transe", toy.num_entities, toy.num_relations, 4, np.random.default_rng(0)
        )
        with pytest.raises(CapabilityError):
            evaluate(KgeScorer(model), toy, [Task.TRT_TAIL, Task.VRT])

    def test_trt_only_for_kge(self, toy: Dataset) -> None:
        """TRT yields head and tail results in both modes."""
        model = build_kge_model(
            "transh", toy.num_entities, toy.num_relations, 4, np.random.default_rng(1)
        )
        results = evaluate(KgeScorer(model), toy, expand_tasks(["trt"]))
        assert [(r.task, r.mode) for r in results] == [
            (Task.TRT_HEAD, "raw"),
            (Task.TRT_HEAD, "filtered"),
            (Task.TRT_TAIL, "raw"),
            (Task.TRT_TAIL, "filtered"),
        ]

    def test_all_tasks_for_joint_model(self, toy: Dataset) -> None:
        """The joint model handles every task."""
        state = ModelState.init(toy, tiny_train_config(), seed=2)
        results = evaluate(JointScorer(state, toy), toy, list(Task), split="train")
        assert {r.task for r in results} == set(Task)
        assert len(results) == 2 * len(Task)

    def test_lookup_encoder_on_unseen_videos_warns(
        self, toy: Dataset, caplog: pytest.LogCaptureFixture
    ) -> None:
        """Ranking test videos through an unfitted lookup table is flagged."""
        lookup = ModelState.init(toy, tiny_train_config(encoder="lookup"), seed=2)
        with caplog.at_level(logging.WARNING, logger="src.evaluation.tasks"):
            evaluate(JointScorer(lookup, toy), toy, [Task.VT], split="train")
            assert "never fitted" not in caplog.text
            evaluate(JointScorer(lookup, toy), toy, [Task.VT], split="test")
            assert f"never fitted on {len(toy.test_videos)} of" in caplog.text

    def test_default_encoder_reads_features(self, toy: Dataset) -> None:
        """The default encoder embeds any video from its features, so nothing is flagged."""
        state = ModelState.init(toy, tiny_train_config(), seed=2)
        assert state.encoder_kind == "mlp"
        assert JointScorer(state, toy).seen_videos is None

    def test_results_file(self, tmp_path: Path) -> None:
        """Result rows are written with a fixed header and read back unchanged."""
        results = [
            RankResult(Task.VRT, "raw", np.array([1, 5, 20]), skipped=2, labels=["a", "b", "c"])
        ]
        rows = result_rows("ours", results)
        path = write_results(tmp_path / "results.csv", rows)
        header = path.read_text(encoding="utf-8").splitlines()[0]
        assert header == ",".join(RESULT_COLUMNS)
        loaded = read_results(path)
        assert loaded == rows
        assert loaded[0].mr == 26 / 3
        assert (loaded[0].queries, loaded[0].skipped) == (3, 2)

    def test_rank_dump(self, tmp_path: Path) -> None:
        """One line per query with its label and rank."""
        results = [RankResult(Task.TV, "raw", np.array([2, 1]), labels=["tag=0", "tag=1"])]
        path = write_rank_dump(tmp_path / "ranks.csv", "clip", results)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(RANK_COLUMNS)
        assert lines[1:] == ["clip,tv,raw,tag=0,2", "clip,tv,raw,tag=1,1"]
