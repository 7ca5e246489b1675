"""
test_kge.py - TransE/H/R score functions, negative sampling and the KGE trainer
"""

import numpy as np
import pytest

from src.datamodel.models import Dataset, SynthConfig, Triplet
from src.datamodel.synthetic import gen_synthetic
from src.errors import ConfigError, DataFormatError
from src.evaluation.tasks import KgeScorer, eval_trt
from src.kge.models import VARIANTS, TransE, TransH, TransR, build_kge_model
from src.kge.sampling import corrupt_tails, sample_negatives
from src.kge.trainer import fit_relations, kge_loss_and_grad, train_kge
from src.objectives.models import KgeConfig
from src.training.train_config import OptimizerConfig
from tests.conftest import numeric_gradient, rel_error

TOLERANCE = 1e-4


class TestScoreFunctions:
    """Test the three translational distances."""

    def test_transe_zero_residual(self) -> None:
        """h + r = t scores zero."""
        model = TransE(np.array([[1.0, 0.0], [1.0, 1.0]]), np.array([[0.0, 1.0]]))
        assert model.score(0, 0, 1) == 0.0

    def test_transh_projection_noop(self) -> None:
        """A normal orthogonal to h and t leaves TransE's residual."""
        entities = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 0.0]])
        model = TransH(entities, np.array([[0.0, 1.0, 0.0]]), np.array([[0.0, 0.0, 1.0]]))
        assert model.score(0, 0, 1) == 0.0

    def test_transr_identity_reduces_to_transe(self) -> None:
        """With M_r = I, TransR and TransE agree on random triplets."""
        rng = np.random.default_rng(0)
        entities, relations = rng.normal(size=(8, 4)), rng.normal(size=(3, 4))
        transe = TransE(entities, relations)
        transr = TransR(entities, relations, np.repeat(np.eye(4)[None], 3, axis=0))
        for _ in range(10):
            h, t = rng.integers(0, 8, size=2)
            r = int(rng.integers(0, 3))
            assert transr.score(int(h), r, int(t)) == pytest.approx(
                transe.score(int(h), r, int(t)), abs=1e-12
            )

    def test_transe_common_translation(self) -> None:
        """Shifting every entity by one vector keeps every distance."""
        rng = np.random.default_rng(1)
        entities, relations = rng.normal(size=(6, 3)), rng.normal(size=(2, 3))
        shifted = TransE(entities + rng.normal(size=3), relations)
        base = TransE(entities, relations)
        assert np.allclose(shifted.tail_distances(2, 1), base.tail_distances(2, 1), atol=1e-12)

    def test_tail_and_head_distances_match_score(self) -> None:
        """Vectorised candidate scoring equals per-triplet scoring."""
        model = build_kge_model("transh", 5, 2, 3, np.random.default_rng(2))
        tails = model.tail_distances(1, 0)
        heads = model.head_distances(1, 4)
        for e in range(5):
            assert tails[e] == pytest.approx(model.score(1, 0, e), abs=1e-12)
            assert heads[e] == pytest.approx(model.score(e, 1, 4), abs=1e-12)

    def test_transh_normals_are_unit(self) -> None:
        """Construction normalises the hyperplane normals."""
        model = build_kge_model("transh", 4, 3, 5, np.random.default_rng(3))
        assert np.allclose(np.linalg.norm(model.normals, axis=1), 1.0)

    def test_unknown_variant(self) -> None:
        """Only TransE, TransH and TransR exist."""
        with pytest.raises(ConfigError):
            build_kge_model("rotate", 4, 2, 3, np.random.default_rng(4))

    @pytest.mark.parametrize("variant", VARIANTS)
    @pytest.mark.parametrize("seed", range(20))
    def test_loss_gradients(self, variant: str, seed: int) -> None:
        """Every parameter gradient of the margin loss matches central differences."""
        rng = np.random.default_rng(seed)
        model = build_kge_model(variant, 6, 2, 3, rng)
        if variant == "transr":
            model.matrices += rng.normal(scale=0.3, size=model.matrices.shape)
        h = np.array([0, 1, 1])
        r = np.array([0, 1, 0])
        t = np.array([2, 3, 4])
        negatives = corrupt_tails(t, 2, 6, rng)
        cfg = KgeConfig(margin=1.0, negatives=2)
        _, grads = kge_loss_and_grad(model, h, r, t, negatives, cfg)

        def loss() -> float:
            return kge_loss_and_grad(model, h, r, t, negatives, cfg)[0]

        for name, value in model.parameters().items():
            assert rel_error(grads[name], numeric_gradient(loss, value)) < TOLERANCE, name

    def test_untouched_relation_rows_have_no_gradient(self) -> None:
        """A batch over relation 0 leaves relation 1's gradient row at zero."""
        model = build_kge_model("transe", 6, 2, 3, np.random.default_rng(6))
        t = np.array([2, 3])
        negatives = corrupt_tails(t, 3, 6, np.random.default_rng(7))
        h, r = np.array([0, 1]), np.array([0, 0])
        _, grads = kge_loss_and_grad(model, h, r, t, negatives, KgeConfig())
        assert np.all(grads["kge.relations"][1] == 0.0)
        assert np.any(grads["kge.relations"][0] != 0.0)


class TestNegativeSampling:
    """Test tail corruption."""

    def test_two_entities(self) -> None:
        """With two entities the corrupted tail is always the other one."""
        samples = sample_negatives(Triplet(0, 0, 1), 20, 2, np.random.default_rng(0))
        assert {s.corrupted_tail for s in samples} == {0}

    def test_never_true_tail(self) -> None:
        """No row ever contains its own tail."""
        tails = np.arange(10)
        corrupted = corrupt_tails(tails, 50, 10, np.random.default_rng(1))
        assert not np.any(corrupted == tails[:, None])
        assert corrupted.min() >= 0 and corrupted.max() <= 9

    def test_seeded(self) -> None:
        """One seed gives one sample sequence."""
        first = corrupt_tails(np.array([3, 4]), 5, 10, np.random.default_rng(2))
        second = corrupt_tails(np.array([3, 4]), 5, 10, np.random.default_rng(2))
        assert np.array_equal(first, second)

    def test_uniform_over_other_entities(self) -> None:
        """10,000 draws spread evenly over the nine eligible tails."""
        draws = corrupt_tails(np.array([3]), 10_000, 10, np.random.default_rng(3))[0]
        counts = np.bincount(draws, minlength=10)
        assert counts[3] == 0
        expected = 10_000 / 9
        sigma = np.sqrt(10_000 * (1 / 9) * (8 / 9))
        eligible = np.delete(counts, 3)
        assert np.all(np.abs(eligible - expected) < 4 * sigma)

    def test_single_entity(self) -> None:
        """At least two entities are required."""
        with pytest.raises(DataFormatError):
            corrupt_tails(np.array([0]), 1, 1, np.random.default_rng(4))


class TestKgeTrainer:
    """Test mini-batch training of the KGE baselines."""

    def test_zero_epochs_keeps_initialisation(self, toy: Dataset) -> None:
        """No epochs, no change."""
        model = build_kge_model(
            "transe", toy.num_entities, toy.num_relations, 4, np.random.default_rng(0)
        )
        before = {k: v.copy() for k, v in model.parameters().items()}
        _, history = train_kge(model, toy, KgeConfig(), OptimizerConfig(), 0, 4, seed=1)
        assert history == []
        for name, value in model.parameters().items():
            assert np.array_equal(value, before[name])

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_same_seed_same_losses(self, toy: Dataset, variant: str) -> None:
        """Two runs with one seed produce identical loss traces and tables."""
        runs = []
        for _ in range(2):
            model = build_kge_model(
                variant, toy.num_entities, toy.num_relations, 4, np.random.default_rng(2)
            )
            _, history = train_kge(model, toy, KgeConfig(), OptimizerConfig(lr=1e-2), 3, 4, 5)
            runs.append((history, model.entities.copy()))
        assert runs[0][0] == runs[1][0]
        assert np.array_equal(runs[0][1], runs[1][1])

    def test_transh_normals_stay_unit(self, toy: Dataset) -> None:
        """Normals are renormalised after every step."""
        model = build_kge_model(
            "transh", toy.num_entities, toy.num_relations, 4, np.random.default_rng(3)
        )
        train_kge(model, toy, KgeConfig(), OptimizerConfig(lr=5e-2), 5, 2, seed=4)
        assert np.allclose(np.linalg.norm(model.normals, axis=1), 1.0)

    def test_fit_relations_freezes_entities(self, toy: Dataset) -> None:
        """Relation-only fitting never touches the supplied entity vectors."""
        vectors = np.random.default_rng(5).normal(size=(toy.num_entities, 4))
        model = fit_relations(vectors, toy, KgeConfig(), OptimizerConfig(lr=1e-2), 3, 4, seed=6)
        assert np.array_equal(model.entities, vectors)

    def test_empty_training_set(self) -> None:
        """Training needs triplets."""
        empty = Dataset(entity_names=("a", "b"), relation_names=("r",))
        model = build_kge_model("transe", 2, 1, 2, np.random.default_rng(7))
        with pytest.raises(DataFormatError):
            train_kge(model, empty, KgeConfig(), OptimizerConfig(), 1, 1, seed=0)

    @pytest.mark.slow
    def test_planted_transe_fits_tails(self, planted: Dataset) -> None:
        """On noise-free planted data TransE ranks training tails in its top 10."""
        model = build_kge_model(
            "transe", planted.num_entities, planted.num_relations, 16, np.random.default_rng(8)
        )
        train_kge(model, planted, KgeConfig(), OptimizerConfig(lr=1e-2), 200, 16, seed=9)
        results = eval_trt(KgeScorer(model), planted, planted.train, modes=("filtered",))
        tail = next(r for r in results if r.task.value == "trt_tail")
        assert tail.metrics.hits10 >= 0.95

    @pytest.mark.slow
    def test_full_scale_transe_ranks_held_out_tails(self) -> None:
        """At 200 entities, 10 relations and 1000 noise-free triplets TransE generalises."""
        dataset = gen_synthetic(SynthConfig(seed=11))
        model = build_kge_model(
            "transe", dataset.num_entities, dataset.num_relations, 32, np.random.default_rng(11)
        )
        train_kge(model, dataset, KgeConfig(), OptimizerConfig(lr=1e-2), 200, 64, seed=11)
        results = eval_trt(KgeScorer(model), dataset, modes=("filtered",))
        tail = next(r for r in results if r.task.value == "trt_tail")
        assert tail.metrics.hits10 >= 0.95
