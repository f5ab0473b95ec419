import os

import pytest

from src.errors import ConfigError, UnknownExperimentError
from src.settings import (ExperimentConfig, SettingsManager, get_settings, get_settings_manager,
                          reset_settings_manager)


@pytest.fixture(autouse=True)
def fresh_manager():
    reset_settings_manager()
    yield
    reset_settings_manager()


def write_config(tmp_path, text):
    path = tmp_path / "bench.cfg"
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestDefaults:
    def test_defaults_need_a_seed(self):
        with pytest.raises(ConfigError, match="experiment.seed"):
            ExperimentConfig().validate()

    def test_seeded_defaults_validate(self, seeded_config):
        seeded_config.validate()
        assert seeded_config.seed == 7
        assert seeded_config.analysis.window == 5

    def test_unknown_experiment(self, seeded_config):
        seeded_config.experiment.experiment = "table99"
        with pytest.raises(UnknownExperimentError):
            seeded_config.validate()

    def test_range_checks_name_the_key(self, seeded_config):
        seeded_config.detectors.mc_samples = 1
        with pytest.raises(ConfigError, match="detectors.mc_samples"):
            seeded_config.validate()


class TestLoading:
    def test_values_are_coerced(self, tmp_path):
        path = write_config(tmp_path, "[experiment]\nseed = 42\n\n[attack]\nepsilon = 0.25\nrelative_epsilon = no\n"
                                      "\n[detectors]\ndetectors = residue, mahalanobis\n")
        cfg = SettingsManager(path).settings
        assert cfg.experiment.seed == 42
        assert cfg.attack.epsilon == 0.25
        assert cfg.attack.relative_epsilon is False
        assert cfg.detectors.detectors == ["residue", "mahalanobis"]

    def test_unknown_key_is_named(self, tmp_path):
        path = write_config(tmp_path, "[model]\nlayers = 3\n")
        with pytest.raises(ConfigError, match="model.layers"):
            SettingsManager(path)

    def test_unknown_section(self, tmp_path):
        path = write_config(tmp_path, "[optimizer]\nlr = 1\n")
        with pytest.raises(ConfigError, match="optimizer"):
            SettingsManager(path)

    def test_bad_value_is_named(self, tmp_path):
        path = write_config(tmp_path, "[corpus]\ntrain_size = lots\n")
        with pytest.raises(ConfigError, match="corpus.train_size"):
            SettingsManager(path)

    def test_malformed_file(self, tmp_path):
        path = write_config(tmp_path, "seed = 1\n")
        with pytest.raises(ConfigError):
            SettingsManager(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            SettingsManager(str(tmp_path / "absent.cfg"))

    def test_optional_none(self, tmp_path):
        path = write_config(tmp_path, "[attack]\nsuppression_threshold = none\n")
        assert SettingsManager(path).settings.attack.suppression_threshold is None


class TestOverrides:
    def test_dotted_overrides(self):
        manager = SettingsManager()
        manager.apply_overrides({"experiment.seed": "3", "attack.budget": 5, "experiment.threads": None})
        assert manager.settings.experiment.seed == 3
        assert manager.settings.attack.budget == 5
        assert manager.settings.experiment.threads == 1

    def test_override_needs_section(self):
        with pytest.raises(ConfigError):
            SettingsManager().apply_overrides({"seed": "3"})

    def test_save_and_reload(self, tmp_path):
        manager = SettingsManager()
        manager.apply_overrides({"experiment.seed": "9", "model.pooling": "mean"})
        path = str(tmp_path / "saved.cfg")
        manager.save_settings(path)
        reloaded = SettingsManager(path).settings
        assert reloaded.to_dict() == manager.settings.to_dict()


class TestGlobalManager:
    def test_singleton(self):
        assert get_settings_manager() is get_settings_manager()
        assert get_settings() is get_settings_manager().settings

    def test_reset_gives_fresh_defaults(self):
        get_settings_manager().apply_overrides({"experiment.seed": "1"})
        reset_settings_manager()
        assert get_settings().experiment.seed is None


class TestExampleConfig:
    def test_example_config_loads(self):
        path = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "docs", "example.cfg")
        cfg = SettingsManager(path).settings
        cfg.validate()
        assert cfg.experiment.threads == 4
        assert cfg.attack.suppression_threshold is None
        assert cfg.detectors.detectors[-1] == "uncertainty"
