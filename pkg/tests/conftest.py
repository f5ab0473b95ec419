"""
Shared fixtures for the ResidueBench test suite
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.classifier_model import ClassifierModel
from src.grid_model import GridModel
from src.settings import ExperimentConfig, ModelSettings
from src.text_data_model import LabeledDataset, LabeledSample, TokenSequence, Vocabulary

TINY_WORDS = ["good", "great", "fine", "bad", "awful", "poor", "movie", "plot", "actor", "scene"]


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the desk-scale trend checks on the standard toy fixture")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains full toy models; needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tiny_vocab():
    return Vocabulary(TINY_WORDS)


@pytest.fixture
def tiny_settings():
    return ModelSettings(input_dim=4, embedding_dim=6, dropout=0.2, init_scale=0.8)


@pytest.fixture
def tiny_model(tiny_vocab, tiny_settings):
    return ClassifierModel.initialize(tiny_vocab, tiny_settings, num_classes=3, seed=11)


@pytest.fixture
def tiny_regression_model(tiny_vocab, tiny_settings):
    settings = ModelSettings(input_dim=4, embedding_dim=6, head="regression", dropout=0.0)
    return ClassifierModel.initialize(tiny_vocab, settings, num_classes=0, seed=5)


@pytest.fixture
def tiny_dataset(tiny_vocab):
    rng = np.random.default_rng(3)
    samples = []
    for i in range(24):
        length = int(rng.integers(3, 7))
        ids = tuple(int(t) for t in rng.integers(2, len(tiny_vocab), size=length))
        samples.append(LabeledSample(TokenSequence(ids), i % 3))
    return LabeledDataset(samples, tiny_vocab, 3, "tiny")


@pytest.fixture
def tiny_grid_model():
    return GridModel.initialize(grid_size=4, hidden_dim=5, num_classes=3, levels=4, dropout=0.1, seed=2)


@pytest.fixture
def continuous_grid_model():
    return GridModel.initialize(grid_size=4, hidden_dim=5, num_classes=3, levels=None, dropout=0.1, seed=2)


@pytest.fixture
def seeded_config():
    cfg = ExperimentConfig()
    cfg.experiment.seed = 7
    return cfg


def small_experiment_config(tmp_path, experiment: str, seed: int = 3) -> ExperimentConfig:
    """A scaled-down run that still trains, attacks and detects end to end"""
    cfg = ExperimentConfig()
    cfg.experiment.experiment = experiment
    cfg.experiment.seed = seed
    cfg.experiment.output_dir = str(tmp_path)
    cfg.corpus.train_size = 400
    cfg.corpus.test_size = 120
    cfg.corpus.vocab_size = 40
    cfg.model.epochs = 8
    cfg.model.embedding_dim = 16
    cfg.model.input_dim = 8
    cfg.detectors.train_pairs_limit = 200
    cfg.detectors.mc_samples = 4
    cfg.attack.concat_fit_size = 40
    cfg.attack.steps = 5
    return cfg


@pytest.fixture
def small_config(tmp_path):
    """Factory for scaled-down experiment configs writing under tmp_path"""
    def make(experiment: str, seed: int = 3, subdir: str = "run") -> ExperimentConfig:
        return small_experiment_config(tmp_path / subdir, experiment, seed)
    return make
