"""
Experiment settings management for ResidueBench
Plain-text `key = value` files with [sections], overridable from the CLI
"""
import configparser
import os
from dataclasses import dataclass, field, fields, asdict
from enum import Enum
from typing import Any, Dict, List, Optional, get_type_hints

from src.errors import ConfigError, UnknownExperimentError
from src.logger import get_logger

logger = get_logger(__name__)


class ExperimentId(Enum):
    """Experiment pipelines known to the workbench"""
    TABLE3 = "table3"        # attack impact
    TABLE4 = "table4"        # detector comparison
    TABLE5 = "table5"        # detection-aware suppression
    FIG1 = "fig1"            # residue profile plot
    FIG2 = "fig2"            # windowed projection sweep
    TABLE6 = "table6"        # discrete vs continuous magnitudes
    TABLE8 = "table8-analog"  # four-domain portability
    TRANSFER = "transfer"    # cross-attack transfer


class HeadType(Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


class Pooling(Enum):
    ATTENTION = "attention"
    MEAN = "mean"


@dataclass
class CorpusSettings:
    """Synthetic corpus (or dataset file) settings"""
    num_classes: int = 4
    vocab_size: int = 120            # filler words
    keywords_per_class: int = 4
    synonyms_per_keyword: int = 3
    keywords_per_sample: int = 2
    min_length: int = 6
    max_length: int = 12
    label_noise: float = 0.0
    distractor_rate: float = 0.3     # chance of one keyword from another class
    synonym_rate: float = 0.02       # per-slot chance a filler slot holds a seen synonym
    unseen_synonym_fraction: float = 0.34
    train_size: int = 2000
    test_size: int = 500
    regression: bool = False
    dataset_path: str = ""           # JSON-lines train file; synthetic corpus when empty
    test_path: str = ""
    lexicon_path: str = ""
    frequency_path: str = ""         # token<TAB>count file; counted from the training set when empty
    # Image analog
    grid_size: int = 8
    grid_levels: int = 4
    grid_train_size: int = 1000
    grid_test_size: int = 250
    grid_noise: float = 40.0
    grid_separation: float = 12.0    # per-pixel offset of a class pattern from the shared background
    grid_path: str = ""              # directory with grid_*_{train,test}.npz sets; synthesized when empty


@dataclass
class ModelSettings:
    """Toy classifier architecture and training settings"""
    checkpoint_path: str = ""
    input_dim: int = 16
    embedding_dim: int = 32
    pooling: str = Pooling.ATTENTION.value
    head: str = HeadType.CLASSIFICATION.value
    dropout: float = 0.1
    normalize_embedding: bool = False
    init_scale: float = 0.5
    learning_rate: float = 0.1
    epochs: int = 20
    batch_size: int = 32
    grid_hidden_dim: int = 32
    grid_learning_rate: float = 0.2
    grid_epochs: int = 40


@dataclass
class AttackSettings:
    """Attack budgets and step settings"""
    budget: int = 3                  # N for substitution attacks
    concat_length: int = 3           # N for the universal concatenation attack
    epsilon: float = 0.1             # l-inf radius for PGD on input embeddings
    relative_epsilon: bool = True    # scale epsilon by the embedding table's std
    alpha: float = 1.0
    steps: int = 20
    grid_budget: int = 8
    grid_epsilon: float = 16.0
    grid_alpha: float = 5000.0
    concat_fit_size: int = 200       # training samples the universal suffix is searched on
    suppression_threshold: Optional[float] = None  # defaults to the defender's best-F1 beta


@dataclass
class DetectorSettings:
    """Detector zoo settings"""
    detectors: List[str] = field(default_factory=lambda: [
        "residue", "perplexity", "fgws", "mahalanobis", "uncertainty"])
    residue_lr: float = 0.2
    residue_epochs: int = 1000
    residue_batch_size: int = 200
    standardize: bool = False
    mahalanobis_ridge: float = 1e-6
    mc_samples: int = 16
    uncertainty_measure: str = "auto"
    ngram_order: int = 2
    fgws_percentile: float = 10.0
    validation_fraction: float = 0.2
    train_pairs_limit: int = 1000    # training samples attacked for detector fitting; 0 = all


@dataclass
class AnalysisSettings:
    """PCA residue analysis settings"""
    window: int = 5
    central_start: int = 5
    central_stop: int = 16           # exclusive: ranks 5..15
    nsigma_ranks: int = 0            # 0 = all non-degenerate ranks


@dataclass
class ExperimentSettings:
    """Which pipeline to run and where to put the results"""
    experiment: str = ExperimentId.TABLE4.value
    seed: Optional[int] = None
    output_dir: str = "results"
    threads: int = 1


@dataclass
class ExperimentConfig:
    """Full configuration of one workbench run"""
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    corpus: CorpusSettings = field(default_factory=CorpusSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    attack: AttackSettings = field(default_factory=AttackSettings)
    detectors: DetectorSettings = field(default_factory=DetectorSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)

    @property
    def seed(self) -> int:
        if self.experiment.seed is None:
            raise ConfigError("experiment.seed: a seed is mandatory")
        return self.experiment.seed

    def validate(self):
        """Check value ranges; raises ConfigError naming the offending key"""
        try:
            ExperimentId(self.experiment.experiment)
        except ValueError:
            raise UnknownExperimentError(f"experiment.experiment: unknown experiment id '{self.experiment.experiment}'")
        _ = self.seed
        if self.experiment.threads < 1:
            raise ConfigError("experiment.threads: must be >= 1")
        try:
            Pooling(self.model.pooling)
        except ValueError:
            raise ConfigError(f"model.pooling: unknown pooling '{self.model.pooling}'")
        try:
            HeadType(self.model.head)
        except ValueError:
            raise ConfigError(f"model.head: unknown head type '{self.model.head}'")
        if not 0.0 <= self.model.dropout < 1.0:
            raise ConfigError("model.dropout: must be in [0, 1)")
        if not 0.0 <= self.corpus.label_noise <= 1.0:
            raise ConfigError("corpus.label_noise: must be in [0, 1]")
        if self.corpus.min_length < 1 or self.corpus.max_length < self.corpus.min_length:
            raise ConfigError("corpus.min_length: lengths must satisfy 1 <= min_length <= max_length")
        if self.attack.budget < 0:
            raise ConfigError("attack.budget: must be >= 0")
        if self.attack.epsilon < 0:
            raise ConfigError("attack.epsilon: must be >= 0")
        if self.corpus.grid_separation < 0 or self.corpus.grid_noise < 0:
            raise ConfigError("corpus.grid_separation: grid separation and noise must be >= 0")
        if self.attack.alpha <= 0:
            raise ConfigError("attack.alpha: must be > 0")
        if self.detectors.mc_samples < 2:
            raise ConfigError("detectors.mc_samples: must be >= 2")
        if self.detectors.ngram_order not in (1, 2, 3):
            raise ConfigError("detectors.ngram_order: must be 1, 2 or 3")
        if self.attack.concat_fit_size < 1:
            raise ConfigError("attack.concat_fit_size: must be >= 1")
        if self.detectors.train_pairs_limit < 0:
            raise ConfigError("detectors.train_pairs_limit: must be >= 0 (0 = all)")
        if not 0.0 < self.detectors.validation_fraction < 1.0:
            raise ConfigError("detectors.validation_fraction: must be in (0, 1)")
        if self.analysis.window < 1:
            raise ConfigError("analysis.window: must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


_SECTIONS = [f.name for f in fields(ExperimentConfig)]


def _coerce(section: str, key: str, raw: Any, target_type) -> Any:
    """Convert a raw config string (or CLI value) to the dataclass field type"""
    name = f"{section}.{key}"
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    origin = getattr(target_type, "__origin__", None)
    args = getattr(target_type, "__args__", ())
    try:
        if origin is list or target_type is List[str]:
            return [item.strip() for item in text.split(",") if item.strip()]
        if origin is not None and type(None) in args:
            # Optional[X]
            if text.lower() in ("", "none", "null"):
                return None
            inner = [a for a in args if a is not type(None)][0]
            return _coerce(section, key, text, inner)
        if target_type is bool:
            lowered = text.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text}")
        if target_type is int:
            return int(text)
        if target_type is float:
            return float(text)
        return text
    except ValueError as e:
        raise ConfigError(f"{name}: invalid value '{raw}' ({e})")


class SettingsManager:
    """Loads, overrides and saves experiment settings"""

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file
        self.settings = ExperimentConfig()
        if config_file:
            self.load_settings(config_file)

    def load_settings(self, path: str):
        """Load settings from a `key = value` file with sections"""
        if not os.path.exists(path):
            raise ConfigError(f"config: file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as f:
                parser.read_file(f)
        except configparser.Error as e:
            raise ConfigError(f"config: malformed file {path}: {e}")

        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"{section}: unknown config section")
            for key, raw in parser.items(section):
                self.set_value(section, key, raw)
        self.config_file = path
        logger.info(f"Settings loaded from {path}")

    def set_value(self, section: str, key: str, raw: Any):
        """Set one value, coercing it to the field type"""
        if section not in _SECTIONS:
            raise ConfigError(f"{section}.{key}: unknown config section")
        target = getattr(self.settings, section)
        hints = get_type_hints(type(target))
        if key not in hints:
            raise ConfigError(f"{section}.{key}: unknown config key")
        setattr(target, key, _coerce(section, key, raw, hints[key]))

    def apply_overrides(self, overrides: Dict[str, Any]):
        """Apply `section.key -> value` overrides (CLI flags); None values are skipped"""
        for dotted, value in overrides.items():
            if value is None:
                continue
            if "." not in dotted:
                raise ConfigError(f"{dotted}: override keys must be 'section.key'")
            section, key = dotted.split(".", 1)
            self.set_value(section, key, value)

    def save_settings(self, path: str):
        """Write the current settings in the same `key = value` format"""
        parser = configparser.ConfigParser(interpolation=None)
        for section in _SECTIONS:
            values = asdict(getattr(self.settings, section))
            parser[section] = {
                k: (",".join(v) if isinstance(v, list) else ("" if v is None else str(v)))
                for k, v in values.items()
            }
        with open(path, "w", encoding="utf-8") as f:
            parser.write(f)
        logger.debug(f"Settings saved to {path}")


# Global settings manager instance
_settings_manager: Optional[SettingsManager] = None


def get_settings_manager(config_file: Optional[str] = None) -> SettingsManager:
    """Get the global settings manager instance"""
    global _settings_manager
    if _settings_manager is None or (config_file and config_file != _settings_manager.config_file):
        _settings_manager = SettingsManager(config_file)
    return _settings_manager


def get_settings() -> ExperimentConfig:
    """Get current experiment settings"""
    return get_settings_manager().settings


def reset_settings_manager():
    """Drop the global instance (fresh defaults on next access)"""
    global _settings_manager
    _settings_manager = None
