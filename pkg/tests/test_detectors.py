import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.attacks.attack_types import SynonymLexicon
from src.classifier_model import ClassifierModel
from src.detectors.detector_score import DetectorScore, binary_labels, score_values, stack_pairs
from src.detectors.fgws import FGWSScorer, default_threshold, fgws_score, fgws_substitute
from src.detectors.mahalanobis import (MahalanobisModel, MahalanobisScorer, fit_mahalanobis, load_mahalanobis,
                                       mahalanobis_score, pooled_covariance, save_mahalanobis)
from src.detectors.perplexity import BOS_ID, PerplexityScorer, fit_ngram_lm, perplexity, perplexity_score
from src.detectors.residue import (ResidueDetector, ResidueHyperparams, load_residue_detector, residue_score,
                                   save_residue_detector, train_residue)
from src.detectors.uncertainty import (UncertaintyMeasure, UncertaintyScorer, select_uncertainty_measure,
                                       uncertainty_from_samples, uncertainty_score)
from src.errors import (ConfigError, ContractViolationError, DataError, DimensionMismatchError, NumericError,
                        UnsupportedOperationError)
from src.evaluation import evaluate_detection
from src.output_stage import OutputHead
from src.settings import HeadType, Pooling
from src.text_data_model import FrequencyTable, TokenSequence, Vocabulary


def separable_pairs(n=100, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    clean = rng.normal(0.0, 0.3, size=(n, dim))
    clean[:, 0] -= 3.0
    adversarial = rng.normal(0.0, 0.3, size=(n, dim))
    adversarial[:, 0] += 3.0
    return stack_pairs(clean, adversarial)


class TestDetectorScore:
    def test_non_finite_rejected(self):
        with pytest.raises(ContractViolationError):
            DetectorScore(float("nan"), "x")

    def test_binary_labels_need_both_classes(self):
        with pytest.raises(DataError):
            binary_labels([0, 0, 0])
        with pytest.raises(DataError):
            binary_labels([0, 2])
        assert binary_labels([True, False]).tolist() == [1.0, 0.0]


class TestResidue:
    def test_zero_detector_scores_half(self):
        scores = ResidueDetector.zeros(3).scores(np.random.default_rng(0).normal(size=(5, 3)))
        assert_allclose(scores, 0.5)

    def test_closed_form(self):
        detector = ResidueDetector(np.array([1.0, 0.0]), 0.0)
        assert abs(residue_score(detector, np.array([2.0, 5.0])).score - 0.8807970779778823) <= 1e-12

    def test_score_increases_with_logit(self):
        rng = np.random.default_rng(1)
        detector = ResidueDetector(rng.normal(size=4), 0.3)
        e = rng.normal(size=(50, 4))
        logits, scores = e @ detector.weight, detector.scores(e)
        for i in range(49):
            if logits[i] < logits[i + 1]:
                assert scores[i] < scores[i + 1]

    def test_separable_clusters_reach_perfect_f1(self):
        data, labels = separable_pairs()
        detector = train_residue(data, labels, ResidueHyperparams(learning_rate=0.1, epochs=50)).detector
        assert evaluate_detection(detector.scores(data), labels, "residue").best_f1 == 1.0

    def test_training_loss_decreases(self):
        data, labels = separable_pairs()
        losses = train_residue(data, labels).epoch_losses
        assert len(losses) == ResidueHyperparams().epochs
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_training_is_deterministic(self):
        data, labels = separable_pairs()
        hyper = ResidueHyperparams(batch_size=16, seed=3)
        a = train_residue(data, labels, hyper).detector
        b = train_residue(data, labels, hyper).detector
        assert np.array_equal(a.weight, b.weight) and a.bias == b.bias

    def test_standardized_training(self):
        data, labels = separable_pairs()
        hyper = ResidueHyperparams(learning_rate=0.1, epochs=50, standardize=True)
        detector = train_residue(data * 50.0, labels, hyper).detector
        assert detector.mean is not None
        assert evaluate_detection(detector.scores(data * 50.0), labels, "residue").best_f1 == 1.0

    def test_single_label_rejected(self):
        with pytest.raises(DataError):
            train_residue(np.zeros((4, 2)), [1, 1, 1, 1])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            ResidueDetector.zeros(3).scores(np.zeros((2, 4)))

    def test_single_vector_only(self):
        with pytest.raises(NumericError):
            residue_score(ResidueDetector.zeros(2), np.zeros((2, 2)))

    def test_checkpoint_round_trip(self, tmp_path):
        data, labels = separable_pairs()
        detector = train_residue(data, labels, ResidueHyperparams(standardize=True)).detector
        path = str(tmp_path / "residue.ckpt")
        save_residue_detector(detector, path)
        loaded = load_residue_detector(path)
        assert np.array_equal(loaded.scores(data), detector.scores(data))


class TestMahalanobis:
    def test_closed_form(self):
        m = MahalanobisModel(np.array([0, 1]), np.array([[0.0, 0.0], [2.0, 0.0]]), np.eye(2), np.eye(2))
        assert mahalanobis_score(m, np.array([1.0, 0.0])).score == 1.0

    def test_pooled_covariance_matches_double_loop(self):
        rng = np.random.default_rng(0)
        e = rng.normal(size=(12, 3))
        y = np.array([0, 1, 2] * 4)
        classes = np.array([0, 1, 2])
        means = np.stack([e[y == k].mean(axis=0) for k in classes])
        expected = np.zeros((3, 3))
        for i in range(12):
            d = e[i] - means[y[i]]
            for a in range(3):
                for b in range(3):
                    expected[a, b] += d[a] * d[b] / 12
        assert_allclose(pooled_covariance(e, y, classes, means), expected, atol=1e-10)

    def test_precision_inverts_covariance(self):
        rng = np.random.default_rng(1)
        e = rng.normal(0.0, 2.0, size=(500, 3))
        y = rng.integers(0, 2, size=500)
        m = fit_mahalanobis(e, y)
        assert_allclose(m.precision @ m.covariance, np.eye(3), atol=1e-6)

    def test_matches_explicit_inverse(self):
        rng = np.random.default_rng(2)
        e, y = rng.normal(size=(40, 3)), np.repeat([0, 1], 20)
        m = fit_mahalanobis(e, y)
        inv = np.linalg.inv(m.covariance + m.ridge * np.eye(3))
        neutral = rng.normal(size=3)
        expected = min(math.sqrt((neutral - mu) @ inv @ (neutral - mu)) for mu in m.means)
        assert abs(mahalanobis_score(m, neutral).score - expected) <= 1e-8

    def test_affine_invariance(self):
        rng = np.random.default_rng(3)
        e, y = rng.normal(size=(60, 3)), np.repeat([0, 1, 2], 20)
        a = np.array([[2.0, 0.5, 0.0], [0.0, 1.0, -0.3], [0.4, 0.0, 1.5]])
        b = np.array([1.0, -2.0, 0.5])
        masked = rng.normal(size=(5, 3))
        plain = fit_mahalanobis(e, y, ridge=0.0).distances(masked)
        moved = fit_mahalanobis(e @ a.T + b, y, ridge=0.0).distances(masked @ a.T + b)
        assert_allclose(moved, plain, atol=1e-6)

    def test_needs_two_samples_per_class(self):
        with pytest.raises(DataError):
            fit_mahalanobis(np.zeros((3, 2)), [0, 0, 1])

    def test_checkpoint_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        m = fit_mahalanobis(rng.normal(size=(20, 2)), np.repeat([0, 1], 10))
        path = str(tmp_path / "maha.ckpt")
        save_mahalanobis(m, path)
        neutral = rng.normal(size=(3, 2))
        assert np.array_equal(load_mahalanobis(path).distances(neutral), m.distances(neutral))


def entropy_loop(p):
    return -sum(v * math.log(v) for v in p if v > 0)


class TestUncertainty:
    def test_identical_samples_have_no_disagreement(self):
        samples = np.tile([0.2, 0.5, 0.3], (4, 1))
        for measure in (UncertaintyMeasure.MUTUAL_INFORMATION, UncertaintyMeasure.KL, UncertaintyMeasure.REVERSE_MI):
            assert abs(uncertainty_from_samples(samples, measure)) <= 1e-12

    def test_opposite_samples(self):
        samples = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert_allclose(uncertainty_from_samples(samples, UncertaintyMeasure.ENTROPY_OF_EXPECTED), math.log(2))
        assert_allclose(uncertainty_from_samples(samples, UncertaintyMeasure.EXPECTED_ENTROPY), 0.0)
        assert_allclose(uncertainty_from_samples(samples, UncertaintyMeasure.MUTUAL_INFORMATION), math.log(2))
        assert_allclose(uncertainty_from_samples(samples, UncertaintyMeasure.CONFIDENCE), 0.5)

    def test_measures_match_direct_formulas(self):
        p = np.random.default_rng(0).dirichlet(np.ones(4), size=6)
        m, k = p.shape
        mean = [sum(p[i, c] for i in range(m)) / m for c in range(k)]
        expected_entropy = sum(entropy_loop(p[i]) for i in range(m)) / m
        kl = sum(sum(p[i, c] * math.log(p[i, c] / p[j, c]) for c in range(k))
                 for i in range(m) for j in range(m)) / (m * m)
        reverse = sum(sum(mean[c] * math.log(mean[c] / p[i, c]) for c in range(k)) for i in range(m)) / m
        expected = {
            UncertaintyMeasure.ENTROPY_OF_EXPECTED: entropy_loop(mean),
            UncertaintyMeasure.EXPECTED_ENTROPY: expected_entropy,
            UncertaintyMeasure.MUTUAL_INFORMATION: entropy_loop(mean) - expected_entropy,
            UncertaintyMeasure.CONFIDENCE: 1.0 - max(mean),
            UncertaintyMeasure.KL: kl,
            UncertaintyMeasure.REVERSE_MI: reverse,
        }
        for measure, value in expected.items():
            assert abs(uncertainty_from_samples(p, measure) - value) <= 1e-10, measure

    def test_needs_two_samples(self):
        with pytest.raises(ConfigError):
            uncertainty_from_samples(np.array([[0.5, 0.5]]), UncertaintyMeasure.CONFIDENCE)

    def test_score_from_model(self, tiny_model):
        score = uncertainty_score(tiny_model, TokenSequence((2, 3, 4)), UncertaintyMeasure.MUTUAL_INFORMATION,
                                  count=8, seed=1)
        assert score.detector_id == "uncertainty" and score.score >= -1e-12

    def test_regression_head_unsupported(self, tiny_regression_model):
        with pytest.raises(UnsupportedOperationError):
            uncertainty_score(tiny_regression_model, TokenSequence((2,)), UncertaintyMeasure.CONFIDENCE, count=4)

    def test_measure_selection(self, tiny_model):
        rng = np.random.default_rng(5)
        clean = rng.normal(0.0, 0.1, size=(10, tiny_model.embedding_dim))
        adversarial = rng.normal(0.0, 3.0, size=(10, tiny_model.embedding_dim))
        measure, f1 = select_uncertainty_measure(tiny_model.head, clean, adversarial, count=6, seed=2)
        assert isinstance(measure, UncertaintyMeasure)
        assert 0.0 < f1 <= 1.0


class TestPerplexity:
    def test_single_repeated_token(self):
        lm = fit_ngram_lm([TokenSequence((2, 2, 2))], n=1)
        assert perplexity(lm, TokenSequence((2, 2))) == 1.0

    def test_hand_counted_bigram(self):
        lm = fit_ngram_lm([TokenSequence((2, 3)), TokenSequence((2, 2))], n=2)
        # p(2 | <s>) = (2 + 1) / (2 + 2), p(3 | 2) = (1 + 1) / (2 + 2)
        assert abs(perplexity(lm, TokenSequence((2, 3))) - 1.0 / math.sqrt(0.75 * 0.5)) <= 1e-10

    def test_conditionals_sum_to_one(self):
        corpus = [TokenSequence(tuple(int(t) for t in row))
                  for row in np.random.default_rng(0).integers(2, 6, size=(10, 5))]
        lm = fit_ngram_lm(corpus, n=3, vocab_size=4)
        for history in list(lm.counts) + [(BOS_ID, 99)]:
            assert abs(sum(lm.probability(history, t) for t in range(2, 6)) - 1.0) <= 1e-12

    def test_perplexity_at_least_one(self):
        lm = fit_ngram_lm([TokenSequence((2, 3, 4)), TokenSequence((4, 3))], n=2)
        assert perplexity(lm, TokenSequence((3, 2, 9))) >= 1.0

    def test_unsupported_order(self):
        with pytest.raises(ConfigError):
            fit_ngram_lm([TokenSequence((2,))], n=4)

    def test_empty_sequence(self):
        lm = fit_ngram_lm([TokenSequence((2,))], n=1)
        with pytest.raises(DataError):
            perplexity(lm, TokenSequence(()))


def rare_word_setup():
    vocab = Vocabulary(["rare", "common", "other", "filler"])
    embedding = np.zeros((len(vocab), 2))
    embedding[2] = [1.0, 0.0]
    embedding[3] = [-0.4, 0.0]
    embedding[4] = [0.0, 1.0]
    params = {"embedding": embedding, "attention": np.zeros(2),
              "encoder_weight": np.eye(2), "encoder_bias": np.zeros(2)}
    head = OutputHead(2.0 * np.eye(2), np.zeros(2), HeadType.CLASSIFICATION, dropout=0.0)
    model = ClassifierModel(vocab, params, head, Pooling.MEAN)
    table = FrequencyTable({"rare": 1, "common": 80, "other": 5, "filler": 200})
    lexicon = SynonymLexicon({2: [4, 3]})
    return model, table, lexicon


class TestFGWS:
    def test_rare_word_swapped_for_most_frequent_synonym(self):
        model, table, lexicon = rare_word_setup()
        out, replaced = fgws_substitute(model, TokenSequence((2, 5)), table, 10.0, lexicon)
        assert out.ids == (3, 5) and replaced == 1

    def test_score_is_prediction_shift(self):
        model, table, lexicon = rare_word_setup()
        x = TokenSequence((2, 5))
        before = model.forward(x)
        predicted = int(np.argmax(before))
        expected = abs(before[predicted] - model.forward(TokenSequence((3, 5)))[predicted])
        assert abs(fgws_score(model, x, table, 10.0, lexicon).score - expected) <= 1e-12

    def test_frequent_words_score_zero(self):
        model, table, lexicon = rare_word_setup()
        assert fgws_score(model, TokenSequence((3, 5)), table, 10.0, lexicon).score == 0.0

    def test_scores_in_unit_interval(self):
        model, table, lexicon = rare_word_setup()
        scorer = FGWSScorer(model, table, lexicon, threshold=10.0)
        scores = scorer([TokenSequence((2,)), TokenSequence((2, 2, 4)), TokenSequence((5,))])
        assert np.all((scores >= 0.0) & (scores <= 1.0))

    def test_default_threshold_is_tenth_percentile(self):
        _, table, _ = rare_word_setup()
        assert default_threshold(table) == pytest.approx(np.percentile([1, 80, 5, 200], 10))

    def test_regression_head_unsupported(self, tiny_regression_model):
        with pytest.raises(UnsupportedOperationError):
            FGWSScorer(tiny_regression_model, FrequencyTable({"good": 3}), SynonymLexicon())([TokenSequence((2,))])


class TestBatchScorers:
    def test_score_values(self):
        assert score_values([DetectorScore(0.5, "residue"), 0.25]).tolist() == [0.5, 0.25]

    def test_mahalanobis_scorer_uses_sentence_embeddings(self, tiny_model, tiny_dataset):
        rng = np.random.default_rng(4)
        m = fit_mahalanobis(rng.normal(size=(30, 6)), np.arange(30) % 3)
        seqs = tiny_dataset.sequences()[:5]
        assert_allclose(MahalanobisScorer(m, tiny_model)(seqs), m.distances(tiny_model.sentence_embeddings(seqs)))

    def test_uncertainty_scorer(self, tiny_model, tiny_dataset):
        seqs = tiny_dataset.sequences()[:4]
        scorer = UncertaintyScorer(tiny_model, "mutual_information", count=4, seed=1)
        first, second = scorer(seqs), scorer(seqs)
        assert first.shape == (4,) and np.all(first >= -1e-12)
        assert np.array_equal(first, second)

    def test_perplexity_scorers_agree(self):
        lm = fit_ngram_lm([TokenSequence((2, 3, 2, 3)), TokenSequence((3, 2))], 2, vocab_size=6)
        x = TokenSequence((2, 3, 3))
        assert perplexity_score(lm, x).score == perplexity(lm, x)
        assert PerplexityScorer(lm)([x]).tolist() == [perplexity(lm, x)]
