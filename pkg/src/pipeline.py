"""
Shared experiment pipeline stages
Corpus and model preparation, attack sweeps and original/adversarial pair assembly
"""
import dataclasses
import hashlib
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.attacks.attack_types import AdversarialExample, AttackConfig, AttackKind, DetectorGate, SynonymLexicon
from src.attacks.concatenation import apply_suffix, concat_universal
from src.attacks.grid_attack import discrete_grid_attack
from src.attacks.pgd import pgd_embedding_attack, pgd_grid_attack
from src.attacks.substitution import pwws_substitute
from src.attacks.sweep import attack_all
from src.checkpoint import load_model
from src.classifier_model import ClassifierModel, TrainingHyperparams, accuracy, train
from src.corpus_parser import load_dataset, load_frequency_table, load_grid_set, load_lexicon
from src.errors import CheckpointError, ConfigError, DataError
from src.grid_model import GridModel, train_grid_model
from src.logger import get_logger
from src.settings import ExperimentConfig, HeadType
from src.synth_corpus import GridCorpus, SynthCorpusSpec, synth_corpus, synth_grid_corpus
from src.text_data_model import PAD_ID, FrequencyTable, LabeledDataset, TokenSequence

logger = get_logger(__name__)


def derive_seed(seed: int, stage: str) -> int:
    """Independent, reproducible seed for a named pipeline stage"""
    digest = hashlib.sha256(f"{seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class TextCorpus:
    train: LabeledDataset
    test: LabeledDataset
    frequency_table: FrequencyTable
    lexicon: SynonymLexicon


@dataclass
class AttackPairs:
    """
    Successful adversarial examples paired with their originals.

    Only originally-correct samples whose counterpart is misclassified are kept,
    so the original and adversarial sets are exactly balanced.
    """
    examples: List[AdversarialExample]
    original_embeddings: np.ndarray
    adversarial_embeddings: np.ndarray
    labels: np.ndarray
    fooling_rate: float
    attempted: int

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def originals(self) -> list:
        return [e.original for e in self.examples]

    @property
    def adversarials(self) -> list:
        return [e.perturbed for e in self.examples]

    def split(self, fraction: float):
        """(head, tail) with the tail holding `fraction` of the pairs"""
        cut = len(self) - int(round(fraction * len(self)))
        return self.subset(range(cut)), self.subset(range(cut, len(self)))

    def subset(self, indices) -> "AttackPairs":
        idx = list(indices)
        return AttackPairs([self.examples[i] for i in idx], self.original_embeddings[idx],
                           self.adversarial_embeddings[idx], self.labels[idx], self.fooling_rate, self.attempted)


class PipelineContext:
    """Lazily builds and caches the artifacts one experiment run needs"""

    def __init__(self, config: ExperimentConfig):
        config.validate()
        self.config = config
        self.seed = config.seed
        self.threads = config.experiment.threads
        self.inputs: Dict[str, str] = {}
        self.runtimes: Dict[str, float] = {}
        self._cache: Dict[str, object] = {}

    @contextmanager
    def timed(self, stage: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.runtimes[stage] = self.runtimes.get(stage, 0.0) + time.perf_counter() - start

    def record_input(self, path: str):
        self.inputs[os.path.abspath(path)] = sha256_file(path)

    def cached(self, key: str, build: Callable[[], object]):
        if key not in self._cache:
            with self.timed(key):
                self._cache[key] = build()
        return self._cache[key]

    # Corpora

    def corpus(self, regression: bool = False) -> TextCorpus:
        return self.cached(f"corpus:{'regression' if regression else 'classification'}",
                           lambda: self._build_corpus(regression))

    def _build_corpus(self, regression: bool) -> TextCorpus:
        settings = self.config.corpus
        if settings.dataset_path and not regression:
            return self._load_corpus()
        spec = dataclasses.replace(SynthCorpusSpec.from_settings(settings), regression=regression)
        synth = synth_corpus(spec, derive_seed(self.seed, "corpus-regression" if regression else "corpus"))
        return TextCorpus(synth.train, synth.test, synth.frequency_table, synth.lexicon)

    def _load_corpus(self) -> TextCorpus:
        settings = self.config.corpus
        if not settings.test_path:
            raise ConfigError("corpus.test_path: a test file is required with corpus.dataset_path")
        for path in (settings.dataset_path, settings.test_path):
            if not os.path.exists(path):
                raise DataError(f"dataset file not found: {path}")
            self.record_input(path)
        train_set = load_dataset(settings.dataset_path)
        test_set = load_dataset(settings.test_path, train_set.vocabulary, train_set.num_classes or None)
        if settings.lexicon_path:
            self.record_input(settings.lexicon_path)
            lexicon, _ = load_lexicon(settings.lexicon_path, train_set.vocabulary)
        else:
            logger.warning("No lexicon configured; substitution attacks will make no edits")
            lexicon = SynonymLexicon()
        if settings.frequency_path:
            self.record_input(settings.frequency_path)
            table = load_frequency_table(settings.frequency_path)
        else:
            table = FrequencyTable.from_dataset(train_set)
        return TextCorpus(train_set, test_set, table, lexicon)

    # Models

    def _hyper(self, stage: str) -> TrainingHyperparams:
        m = self.config.model
        return TrainingHyperparams(m.learning_rate, m.epochs, m.batch_size, derive_seed(self.seed, stage))

    def text_model(self, regression: bool = False) -> ClassifierModel:
        return self.cached(f"model:{'regression' if regression else 'classification'}",
                           lambda: self._build_text_model(regression))

    def _build_text_model(self, regression: bool) -> ClassifierModel:
        settings = self.config.model
        corpus = self.corpus(regression)
        if settings.checkpoint_path and not regression:
            if not os.path.exists(settings.checkpoint_path):
                raise CheckpointError(f"checkpoint not found: {settings.checkpoint_path}")
            self.record_input(settings.checkpoint_path)
            model = load_model(settings.checkpoint_path)
            if not isinstance(model, ClassifierModel):
                raise CheckpointError(f"{settings.checkpoint_path} does not hold a text model")
            if model.vocabulary != corpus.train.vocabulary:
                raise CheckpointError("checkpoint vocabulary differs from the corpus vocabulary")
            return model
        head = HeadType.REGRESSION if regression else HeadType.CLASSIFICATION
        model_settings = dataclasses.replace(settings, head=head.value)
        stage = "model-regression" if regression else "model"
        model = ClassifierModel.initialize(corpus.train.vocabulary, model_settings,
                                           corpus.train.num_classes, derive_seed(self.seed, f"{stage}-init"))
        model = train(model, corpus.train, self._hyper(stage)).model
        if not regression:
            logger.info(f"Text model test accuracy: {accuracy(model, corpus.test):.4f}")
        return model

    def grid_corpus(self, quantized: bool) -> GridCorpus:
        levels = self.config.corpus.grid_levels if quantized else None
        if self.config.corpus.grid_path:
            return self.cached(f"grid-corpus:{levels}", lambda: self._load_grid_corpus(quantized, levels))
        return self.cached(f"grid-corpus:{levels}",
                           lambda: synth_grid_corpus(self.config.corpus, derive_seed(self.seed, "grid-corpus"),
                                                     levels))

    def _load_grid_corpus(self, quantized: bool, levels: Optional[int]) -> GridCorpus:
        """grid_{quantized,continuous}_{train,test}.npz from corpus.grid_path, as written by `synth --grid`"""
        name = "quantized" if quantized else "continuous"
        sets = []
        for split in ("train", "test"):
            path = os.path.join(self.config.corpus.grid_path, f"grid_{name}_{split}.npz")
            grids, labels, stored_levels = load_grid_set(path)
            if stored_levels != levels:
                raise DataError(f"{path}: holds a grid set with {stored_levels} levels, expected {levels}")
            self.record_input(path)
            sets.append((grids, labels))
        (train_grids, train_labels), (test_grids, test_labels) = sets
        return GridCorpus(train_grids, train_labels, test_grids, test_labels, levels)

    def grid_model(self, quantized: bool) -> GridModel:
        def build():
            corpus = self.grid_corpus(quantized)
            stage = f"grid-model-{'quantized' if quantized else 'continuous'}"
            model = GridModel.initialize(self.config.corpus.grid_size, self.config.model.grid_hidden_dim,
                                         self.config.corpus.num_classes, corpus.levels,
                                         self.config.model.dropout, derive_seed(self.seed, f"{stage}-init"))
            m = self.config.model
            hyper = TrainingHyperparams(m.grid_learning_rate, m.grid_epochs, m.batch_size,
                                        derive_seed(self.seed, stage))
            trained = train_grid_model(model, corpus.train_grids, corpus.train_labels, hyper).model
            acc = float(np.mean(trained.predict(corpus.test_grids) == corpus.test_labels))
            logger.info(f"Grid model ({trained.model_id}) test accuracy: {acc:.4f}")
            return trained
        return self.cached(f"grid-model:{quantized}", build)

    # Attack configuration

    def embedding_epsilon(self, model: ClassifierModel) -> float:
        """Configured epsilon, optionally scaled by the std of the (non-padding) embedding table"""
        eps = self.config.attack.epsilon
        if self.config.attack.relative_epsilon:
            table = np.delete(model.params["embedding"], PAD_ID, axis=0)
            eps *= float(table.std())
        return eps

    def attack_config(self, kind: AttackKind, model: Optional[ClassifierModel] = None,
                      budget: Optional[int] = None) -> AttackConfig:
        a = self.config.attack
        if kind == AttackKind.SUBSTITUTION:
            return AttackConfig(kind, budget=a.budget if budget is None else budget)
        if kind == AttackKind.CONCATENATION:
            return AttackConfig(kind, budget=a.concat_length if budget is None else budget)
        if kind == AttackKind.GRID:
            return AttackConfig(kind, budget=a.grid_budget if budget is None else budget)
        if kind == AttackKind.PGD:
            return AttackConfig(kind, epsilon=self.embedding_epsilon(model), alpha=a.alpha, steps=a.steps)
        return AttackConfig(kind, epsilon=a.grid_epsilon, alpha=a.grid_alpha, steps=a.steps)

    # Attack sweeps

    def substitution_examples(self, model: ClassifierModel, dataset: LabeledDataset, budget: Optional[int] = None,
                              gate: Optional[DetectorGate] = None) -> List[AdversarialExample]:
        cfg = self.attack_config(AttackKind.SUBSTITUTION, budget=budget)
        lexicon = self.corpus().lexicon
        return attack_all(lambda s: pwws_substitute(model, s.tokens, cfg, lexicon, int(s.label), gate),
                          dataset.samples, self.threads)

    def pgd_examples(self, model: ClassifierModel, dataset: LabeledDataset) -> List[AdversarialExample]:
        cfg = self.attack_config(AttackKind.PGD, model)
        return attack_all(lambda s: pgd_embedding_attack(model, s.tokens, cfg, s.label), dataset.samples,
                          self.threads)

    def concat_fit_set(self, regression: bool = False) -> LabeledDataset:
        """Leading training samples the universal suffix is searched on"""
        train_set = self.corpus(regression).train
        return train_set.subset(range(min(self.config.attack.concat_fit_size, len(train_set))))

    def universal_suffix(self, model: ClassifierModel, regression: bool = False,
                         gate: Optional[DetectorGate] = None) -> TokenSequence:
        cfg = self.attack_config(AttackKind.CONCATENATION)
        if gate is not None:
            return concat_universal(model, self.concat_fit_set(regression), cfg, gate=gate)
        return self.cached(f"suffix:{'regression' if regression else 'classification'}",
                           lambda: concat_universal(model, self.concat_fit_set(regression), cfg))

    def concatenation_examples(self, model: ClassifierModel, apply_set: LabeledDataset, regression: bool = False,
                               gate: Optional[DetectorGate] = None) -> List[AdversarialExample]:
        suffix = self.universal_suffix(model, regression, gate)
        return apply_suffix(model, apply_set, suffix, gate)

    def train_subset(self, dataset: LabeledDataset) -> LabeledDataset:
        """Training samples attacked for detector fitting (detectors.train_pairs_limit, 0 = all)"""
        limit = self.config.detectors.train_pairs_limit
        return dataset if limit <= 0 else dataset.subset(range(min(limit, len(dataset))))

    def grid_examples(self, model: GridModel, grids: np.ndarray, labels: np.ndarray,
                      quantized: bool) -> List[AdversarialExample]:
        if quantized:
            cfg = self.attack_config(AttackKind.GRID)
            attack = lambda i: discrete_grid_attack(model, grids[i], cfg, int(labels[i]))
        else:
            cfg = self.attack_config(AttackKind.GRID_PGD)
            attack = lambda i: pgd_grid_attack(model, grids[i], cfg, int(labels[i]))
        return attack_all(attack, list(range(len(grids))), self.threads)


# Embeddings and pairs

def example_embeddings(model, examples: Sequence[AdversarialExample], perturbed: bool) -> np.ndarray:
    """Encoder embeddings of the original or perturbed side of each example"""
    if len(examples) == 0:
        dim = model.embedding_dim
        return np.zeros((0, dim))
    if isinstance(model, GridModel):
        return model.encode_batch(np.stack([e.perturbed if perturbed else e.original for e in examples]))
    if perturbed and examples[0].kind == AttackKind.PGD:
        return np.stack([model.encode(e.perturbed, np.asarray(e.original.ids) != PAD_ID) for e in examples])
    return model.sentence_embeddings([e.perturbed if perturbed else e.original for e in examples])


def example_predictions(model, examples: Sequence[AdversarialExample], perturbed: bool) -> np.ndarray:
    if len(examples) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argmax(model.classify_batch(example_embeddings(model, examples, perturbed)), axis=1)


def build_pairs(model, examples: Sequence[AdversarialExample]) -> AttackPairs:
    """Keep originally-correct examples whose adversarial counterpart is misclassified"""
    labels = np.array([int(e.label) for e in examples], dtype=np.int64)
    original_emb = example_embeddings(model, examples, perturbed=False)
    adversarial_emb = example_embeddings(model, examples, perturbed=True)
    before = np.argmax(model.classify_batch(original_emb), axis=1) if len(examples) else labels
    after = np.argmax(model.classify_batch(adversarial_emb), axis=1) if len(examples) else labels
    correct = before == labels
    fooled = correct & (after != labels)
    rate = float(fooled.sum() / correct.sum()) if correct.any() else 0.0
    keep = np.nonzero(fooled)[0]
    logger.info(f"{len(keep)} successful adversarial pairs out of {len(examples)} attacks "
                f"(fooling rate {rate:.4f})")
    return AttackPairs([examples[i] for i in keep], original_emb[keep], adversarial_emb[keep],
                       labels[keep], rate, len(examples))


def edited_pairs(model, examples: Sequence[AdversarialExample]) -> AttackPairs:
    """Pairs for regression heads: every example the attack actually modified"""
    keep = [i for i, e in enumerate(examples) if e.realized > 0]
    kept = [examples[i] for i in keep]
    labels = np.array([float(e.label) for e in kept], dtype=np.float64)
    return AttackPairs(kept, example_embeddings(model, kept, perturbed=False),
                       example_embeddings(model, kept, perturbed=True), labels,
                       float(np.mean([e.success for e in examples])) if examples else 0.0, len(examples))
