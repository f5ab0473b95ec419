"""
Detector zoo harness
Fits every configured detector on training pairs and evaluates it on balanced test pairs
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from src.detectors.fgws import FGWSScorer
from src.detectors.mahalanobis import MahalanobisModel, fit_mahalanobis
from src.detectors.perplexity import PerplexityScorer, fit_ngram_lm
from src.detectors.residue import ResidueDetector, ResidueHyperparams, train_residue
from src.detectors.uncertainty import UncertaintyMeasure, embedding_uncertainty_table, select_uncertainty_measure
from src.errors import ConfigError
from src.evaluation import DetectionReport, evaluate_detection
from src.logger import get_logger
from src.pipeline import AttackPairs, PipelineContext, TextCorpus, derive_seed
from src.text_data_model import TokenSequence

logger = get_logger(__name__)

KNOWN_DETECTORS = ("residue", "perplexity", "fgws", "mahalanobis", "uncertainty")
# Detectors that need token inputs
TOKEN_DETECTORS = ("perplexity", "fgws")


@dataclass
class SuiteResult:
    reports: Dict[str, DetectionReport] = field(default_factory=dict)
    skipped: List[str] = field(default_factory=list)
    uncertainty_measure: Optional[str] = None
    residue: Optional[ResidueDetector] = None

    def f1(self, detector_id: str) -> float:
        return self.reports[detector_id].best_f1

    def summary(self) -> Dict:
        out = {name: report.summary() for name, report in sorted(self.reports.items())}
        if self.uncertainty_measure:
            out["uncertainty"]["measure"] = self.uncertainty_measure
        return out


def residue_hyperparams(ctx: PipelineContext, stage: str) -> ResidueHyperparams:
    d = ctx.config.detectors
    return ResidueHyperparams(d.residue_lr, d.residue_epochs, d.residue_batch_size,
                              derive_seed(ctx.seed, f"residue-{stage}"), d.standardize)


def fit_residue(ctx: PipelineContext, pairs: AttackPairs, stage: str) -> ResidueDetector:
    x = np.concatenate([pairs.original_embeddings, pairs.adversarial_embeddings])
    y = np.concatenate([np.zeros(len(pairs)), np.ones(len(pairs))])
    result = train_residue(x, y, residue_hyperparams(ctx, stage))
    logger.info(f"Residue detector ({stage}): final training loss {result.epoch_losses[-1]:.5f}")
    return result.detector


def _evaluate(scores_orig: np.ndarray, scores_adv: np.ndarray, detector_id: str) -> DetectionReport:
    scores = np.concatenate([scores_orig, scores_adv])
    labels = np.concatenate([np.zeros(len(scores_orig)), np.ones(len(scores_adv))])
    report = evaluate_detection(scores, labels, detector_id)
    logger.info(f"{detector_id}: best F1 {report.best_f1:.4f}")
    return report


class DetectorSuite:
    """
    Runs the detector zoo for one model and attack.

    clean_embeddings/clean_labels are the unattacked training embeddings used
    by the Mahalanobis fit; `corpus` enables the token-level detectors.
    """

    def __init__(self, ctx: PipelineContext, model, clean_embeddings: np.ndarray, clean_labels: np.ndarray,
                 corpus: Optional[TextCorpus] = None, stage: str = "default"):
        self.ctx = ctx
        self.model = model
        self.clean_embeddings = clean_embeddings
        self.clean_labels = clean_labels
        self.corpus = corpus
        self.stage = stage
        self._mahalanobis: Optional[MahalanobisModel] = None

    def _detector_ids(self, detector_ids: Optional[List[str]]) -> List[str]:
        ids = list(detector_ids or self.ctx.config.detectors.detectors)
        for d in ids:
            if d not in KNOWN_DETECTORS:
                raise ConfigError(f"detectors.detectors: unknown detector '{d}'")
        return ids

    def mahalanobis(self) -> MahalanobisModel:
        if self._mahalanobis is None:
            self._mahalanobis = fit_mahalanobis(self.clean_embeddings, self.clean_labels,
                                                self.ctx.config.detectors.mahalanobis_ridge)
        return self._mahalanobis

    def run(self, train: AttackPairs, test: AttackPairs, detector_ids: Optional[List[str]] = None) -> SuiteResult:
        settings = self.ctx.config.detectors
        result = SuiteResult()
        if len(train) == 0 or len(test) == 0:
            result.skipped = self._detector_ids(detector_ids)
            logger.warning(f"{self.stage}: no successful attack pairs ({len(train)} train / {len(test)} test); "
                           f"skipping {', '.join(result.skipped)}")
            return result
        token_inputs = isinstance(test.adversarials[0], TokenSequence)
        for detector_id in self._detector_ids(detector_ids):
            if detector_id in TOKEN_DETECTORS and (self.corpus is None or not token_inputs):
                result.skipped.append(detector_id)
                continue
            if detector_id == "residue":
                detector = fit_residue(self.ctx, train, self.stage)
                result.residue = detector
                orig, adv = detector.scores(test.original_embeddings), detector.scores(test.adversarial_embeddings)
            elif detector_id == "mahalanobis":
                m = self.mahalanobis()
                orig, adv = m.distances(test.original_embeddings), m.distances(test.adversarial_embeddings)
            elif detector_id == "uncertainty":
                measure = self._uncertainty_measure(train)
                result.uncertainty_measure = measure.value
                seed = derive_seed(self.ctx.seed, "mc-dropout")
                orig = embedding_uncertainty_table(self.model.head, test.original_embeddings,
                                                   settings.mc_samples, seed)[measure]
                adv = embedding_uncertainty_table(self.model.head, test.adversarial_embeddings,
                                                  settings.mc_samples, seed)[measure]
            elif detector_id == "perplexity":
                scorer = PerplexityScorer(fit_ngram_lm(self.corpus.train.sequences(), settings.ngram_order))
                orig, adv = scorer(test.originals), scorer(test.adversarials)
            else:
                table = self.corpus.frequency_table
                scorer = FGWSScorer(self.model, table, self.corpus.lexicon, table.percentile(settings.fgws_percentile))
                orig, adv = scorer(test.originals), scorer(test.adversarials)
            result.reports[detector_id] = _evaluate(orig, adv, detector_id)
        return result

    def _uncertainty_measure(self, train: AttackPairs) -> UncertaintyMeasure:
        settings = self.ctx.config.detectors
        if settings.uncertainty_measure != "auto":
            try:
                return UncertaintyMeasure(settings.uncertainty_measure)
            except ValueError:
                raise ConfigError(f"detectors.uncertainty_measure: unknown measure '{settings.uncertainty_measure}'")
        _, validation = train.split(settings.validation_fraction)
        if len(validation) == 0:
            validation = train
        measure, _ = select_uncertainty_measure(self.model.head, validation.original_embeddings,
                                                validation.adversarial_embeddings, settings.mc_samples,
                                                derive_seed(self.ctx.seed, "mc-dropout"))
        return measure
