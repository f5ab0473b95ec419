import numpy as np
import pytest
from scipy.stats import chi2_contingency

from src.corpus_parser import save_dataset
from src.errors import ConfigError
from src.settings import CorpusSettings
from src.synth_corpus import SynthCorpusSpec, keyword_vote, synth_corpus, synth_grid_corpus


def small_spec(**changes):
    values = dict(train_size=300, test_size=60, vocab_size=30)
    values.update(changes)
    return SynthCorpusSpec(**values)


class TestSynthCorpus:
    def test_same_seed_same_bytes(self, tmp_path):
        paths = []
        for run in range(2):
            corpus = synth_corpus(small_spec(), seed=5)
            path = tmp_path / f"train{run}.jsonl"
            save_dataset(corpus.train, str(path))
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_seed_changes_the_corpus(self):
        a = synth_corpus(small_spec(), seed=1)
        b = synth_corpus(small_spec(), seed=2)
        assert a.train.sequences() != b.train.sequences()

    def test_keyword_vote_recovers_clean_labels(self):
        corpus = synth_corpus(small_spec(keywords_per_class=1, distractor_rate=0.0, label_noise=0.0), seed=3)
        for sample in corpus.train:
            assert keyword_vote(corpus, sample.tokens) == sample.label

    def test_full_label_noise_is_independent_of_keywords(self):
        corpus = synth_corpus(small_spec(train_size=1000, label_noise=1.0), seed=4)
        table = np.zeros((4, 4), dtype=np.int64)
        for planted, label in zip(corpus.train_planted, corpus.train.labels()):
            table[planted, label] += 1
        _, p_value, _, _ = chi2_contingency(table)
        assert p_value > 0.001

    def test_unseen_synonyms_never_occur(self):
        corpus = synth_corpus(small_spec(synonym_rate=0.2), seed=6)
        assert corpus.unseen_synonyms
        for word in corpus.unseen_synonyms:
            assert corpus.frequency_table.count(word) == 0

    def test_lexicon_is_symmetric(self):
        corpus = synth_corpus(small_spec(), seed=7)
        for token, candidates in corpus.lexicon.items():
            for other in candidates:
                assert token in corpus.lexicon.candidates(other)

    def test_regression_scores(self):
        corpus = synth_corpus(small_spec(regression=True), seed=8)
        labels = corpus.train.labels()
        assert corpus.train.is_regression
        assert labels.min() >= 0.0 and labels.max() <= 1.0
        assert set(np.round(labels * 2) / 2) <= {0.0, 0.5, 1.0}

    @pytest.mark.parametrize("changes", [dict(num_classes=1), dict(label_noise=1.5), dict(min_length=2),
                                         dict(max_length=3, min_length=4), dict(train_size=0)])
    def test_invalid_settings(self, changes):
        with pytest.raises(ConfigError):
            synth_corpus(small_spec(**changes), seed=0)

    def test_from_settings(self):
        spec = SynthCorpusSpec.from_settings(CorpusSettings(num_classes=3, label_noise=0.1))
        assert spec.num_classes == 3 and spec.label_noise == 0.1


class TestGridCorpus:
    def test_quantized_values(self):
        settings = CorpusSettings(grid_size=4, grid_train_size=20, grid_test_size=5)
        corpus = synth_grid_corpus(settings, seed=0, levels=4)
        assert corpus.train_grids.shape == (20, 4, 4)
        assert set(np.unique(corpus.train_grids)) <= {0.0, 85.0, 170.0, 255.0}

    def test_continuous_values_stay_in_range(self):
        settings = CorpusSettings(grid_size=4, grid_train_size=20, grid_test_size=5)
        corpus = synth_grid_corpus(settings, seed=0)
        assert corpus.levels is None
        assert corpus.test_grids.min() >= 0.0 and corpus.test_grids.max() <= 255.0

    def test_deterministic(self):
        settings = CorpusSettings(grid_size=3, grid_train_size=10, grid_test_size=2)
        a = synth_grid_corpus(settings, seed=9, levels=4)
        b = synth_grid_corpus(settings, seed=9, levels=4)
        assert np.array_equal(a.train_grids, b.train_grids)
        assert np.array_equal(a.test_labels, b.test_labels)

    def test_too_small_grid(self):
        with pytest.raises(ConfigError):
            synth_grid_corpus(CorpusSettings(grid_size=1), seed=0)
