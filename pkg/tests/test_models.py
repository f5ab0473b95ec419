import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.classifier_model import ClassifierModel, TrainingHyperparams, accuracy, train
from src.errors import DataError, DimensionMismatchError, UnsupportedOperationError
from src.grid_model import train_grid_model
from src.settings import ModelSettings
from src.text_data_model import PAD_ID, TokenSequence


def loss_at(model, h, mask, label):
    loss, _, _ = model._loss_and_grads(h[None], mask[None], np.array([label]))
    return loss


def numeric_gradient(f, h, eps=1e-5):
    grad = np.zeros_like(h)
    for idx in np.ndindex(h.shape):
        plus, minus = h.copy(), h.copy()
        plus[idx] += eps
        minus[idx] -= eps
        grad[idx] = (f(plus) - f(minus)) / (2.0 * eps)
    return grad


def relative_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


class TestClassifierForward:
    def test_forward_is_composition(self, tiny_model):
        x = TokenSequence((2, 5, 7, 3))
        composed = tiny_model.classify(tiny_model.encode(tiny_model.embed(x)))
        assert_allclose(tiny_model.forward(x), composed, atol=1e-12)
        assert_allclose(tiny_model.forward(x).sum(), 1.0)

    def test_batch_matches_single(self, tiny_model, tiny_dataset):
        seqs = tiny_dataset.sequences()[:5]
        batch = tiny_model.predict_outputs(seqs)
        for row, seq in enumerate(seqs):
            assert_allclose(batch[row], tiny_model.forward(seq), atol=1e-12)

    def test_inference_is_deterministic(self, tiny_model):
        x = TokenSequence((4, 6))
        assert np.array_equal(tiny_model.forward(x), tiny_model.forward(x))

    def test_padding_ignored(self, tiny_model):
        x = TokenSequence((4, 6, 3))
        padded = TokenSequence((4, 6, 3, PAD_ID, PAD_ID))
        assert_allclose(tiny_model.forward(padded), tiny_model.forward(x), atol=1e-12)

    def test_empty_sequence_rejected(self, tiny_model):
        with pytest.raises(DataError):
            tiny_model.forward(TokenSequence(()))

    def test_out_of_vocabulary_id_rejected(self, tiny_model):
        with pytest.raises(DataError):
            tiny_model.forward(TokenSequence((2, 999)))

    def test_wrong_embedding_dimension(self, tiny_model):
        with pytest.raises(DimensionMismatchError):
            tiny_model.classify(np.zeros(tiny_model.embedding_dim + 1))

    def test_regression_head_returns_float(self, tiny_regression_model):
        out = tiny_regression_model.forward(TokenSequence((2, 3)))
        assert isinstance(out, float)


class TestGradients:
    @pytest.mark.parametrize("pooling", ["attention", "mean"])
    @pytest.mark.parametrize("normalize", [False, True])
    def test_embedding_gradient_matches_finite_differences(self, tiny_vocab, pooling, normalize):
        settings = ModelSettings(input_dim=4, embedding_dim=6, pooling=pooling, normalize_embedding=normalize,
                                 dropout=0.3, init_scale=0.8)
        rng = np.random.default_rng(0)
        for case in range(5):
            model = ClassifierModel.initialize(tiny_vocab, settings, num_classes=3, seed=case)
            x = TokenSequence(tuple(int(t) for t in rng.integers(2, len(tiny_vocab), size=4)))
            label = int(rng.integers(0, 3))
            h = model.embed(x)
            mask = np.ones(len(x), dtype=bool)
            analytic = model.loss_grad_wrt_embeddings(x, label)
            numeric = numeric_gradient(lambda v: loss_at(model, v, mask, label), h)
            assert analytic.shape == h.shape
            assert relative_error(analytic, numeric) < 1e-4

    def test_regression_gradient(self, tiny_regression_model):
        x = TokenSequence((3, 4, 5))
        h = tiny_regression_model.embed(x)
        mask = np.ones(3, dtype=bool)
        analytic = tiny_regression_model.loss_grad_wrt_embeddings(x, 0.7)
        numeric = numeric_gradient(lambda v: loss_at(tiny_regression_model, v, mask, 0.7), h)
        assert relative_error(analytic, numeric) < 1e-4

    def test_label_out_of_range(self, tiny_model):
        with pytest.raises(DataError):
            tiny_model.loss_grad_wrt_embeddings(TokenSequence((2,)), 3)


class TestTraining:
    def test_loss_decreases_and_input_is_untouched(self, tiny_model, tiny_dataset):
        before = tiny_model.params["embedding"].copy()
        result = train(tiny_model, tiny_dataset, TrainingHyperparams(learning_rate=0.2, epochs=15, batch_size=8))
        assert result.epoch_losses[-1] < result.epoch_losses[0]
        assert np.array_equal(tiny_model.params["embedding"], before)
        assert np.all(result.model.params["embedding"][PAD_ID] == 0.0)

    def test_training_is_deterministic(self, tiny_model, tiny_dataset):
        hyper = TrainingHyperparams(epochs=3, batch_size=8, seed=4)
        a = train(tiny_model, tiny_dataset, hyper).model
        b = train(tiny_model, tiny_dataset, hyper).model
        for name, value in a.all_params().items():
            assert np.array_equal(value, b.all_params()[name])

    def test_accuracy_in_unit_interval(self, tiny_model, tiny_dataset):
        assert 0.0 <= accuracy(tiny_model, tiny_dataset) <= 1.0

    def test_empty_dataset_rejected(self, tiny_model, tiny_dataset):
        with pytest.raises(DataError):
            train(tiny_model, tiny_dataset.subset([]), TrainingHyperparams())


class TestMCSamples:
    def test_shape_and_simplex(self, tiny_model):
        samples = tiny_model.mc_samples(TokenSequence((2, 3, 4)), count=6, seed=1)
        assert samples.shape == (6, 3)
        assert_allclose(samples.sum(axis=1), np.ones(6))

    def test_seeded(self, tiny_model):
        x = TokenSequence((2, 3, 4))
        assert np.array_equal(tiny_model.mc_samples(x, 4, seed=9), tiny_model.mc_samples(x, 4, seed=9))

    def test_regression_head_unsupported(self, tiny_regression_model):
        with pytest.raises(UnsupportedOperationError):
            tiny_regression_model.mc_samples(TokenSequence((2,)), 4, seed=0)

    def test_count_must_be_positive(self, tiny_model):
        with pytest.raises(DataError):
            tiny_model.mc_samples(TokenSequence((2,)), 0, seed=0)


class TestGridModel:
    def test_rejects_unquantized_grid(self, tiny_grid_model):
        with pytest.raises(DataError):
            tiny_grid_model.predict(np.full((1, 4, 4), 100.0))

    def test_rejects_out_of_range(self, continuous_grid_model):
        with pytest.raises(DataError):
            continuous_grid_model.predict(np.full((1, 4, 4), 300.0))

    def test_wrong_shape(self, tiny_grid_model):
        with pytest.raises(DimensionMismatchError):
            tiny_grid_model.predict(np.zeros((1, 3, 3)))

    def test_input_gradient_matches_finite_differences(self, continuous_grid_model):
        grid = np.random.default_rng(1).uniform(20, 230, size=(4, 4))
        analytic = continuous_grid_model.loss_grad_wrt_input(grid, 1)

        def f(g):
            loss, _, _ = continuous_grid_model._loss_and_grads(g[None], np.array([1]))
            return loss

        numeric = numeric_gradient(f, grid, eps=1e-3)
        assert relative_error(analytic, numeric) < 1e-4

    def test_training_reduces_loss(self, tiny_grid_model):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 3, size=60)
        grids = np.where(rng.random((60, 4, 4)) < 0.5, 0.0, 255.0)
        grids[:, 0, 0] = np.array([0.0, 85.0, 170.0])[labels]
        result = train_grid_model(tiny_grid_model, grids, labels, TrainingHyperparams(learning_rate=0.3, epochs=20,
                                                                                  batch_size=10))
        assert result.epoch_losses[-1] < result.epoch_losses[0]
