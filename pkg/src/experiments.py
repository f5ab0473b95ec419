"""
Experiment pipelines
Each experiment runs one study end to end and writes its report files
"""
import json
import math
import os
import platform
from abc import ABC, abstractmethod
from importlib import metadata
from typing import Any, Dict, List, Optional

import numpy as np

from src import __version__
from src.attacks.attack_types import AdversarialExample, AttackKind, DetectorGate
from src.attacks.substitution import pwws_substitute
from src.attacks.suppression import detection_aware_attack
from src.attacks.sweep import attack_all
from src.detector_suite import DetectorSuite, SuiteResult, fit_residue, residue_hyperparams
from src.detectors.residue import ResidueScorer
from src.errors import DataError, UnknownExperimentError
from src.evaluation import evaluate_detection, fooling_rate, mean_score_shift, perturbation_norms
from src.logger import get_logger
from src.pipeline import (AttackPairs, PipelineContext, build_pairs, derive_seed, edited_pairs,
                          example_predictions)
from src.residue_analysis import (SweepData, component_profile, default_trainer, fit_pca, n_sigma_detail,
                                  residue_gap, sweep_peaks, window_sweep, write_profile_csv, write_sweep_csv)
from src.settings import ExperimentConfig, ExperimentId
from src.svg_plot import LinePlot

logger = get_logger(__name__)

REPORT_FILE = "report.json"
MANIFEST_FILE = "manifest.json"
EMBEDDING_DETECTORS = ["residue", "mahalanobis", "uncertainty"]


# Stable JSON output

def stable(value: Any) -> Any:
    """Round floats to 10 digits and map non-finite values to strings, recursively"""
    if isinstance(value, dict):
        return {str(k): stable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [stable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return round(v, 10)
    return value


def write_json(path: str, payload: Dict):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(stable(payload), f, indent=2, sort_keys=True)
        f.write("\n")


# Shared stages

def examples_fooling_rate(model, examples: List[AdversarialExample]) -> float:
    labels = np.array([int(e.label) for e in examples])
    return fooling_rate(labels, example_predictions(model, examples, False), example_predictions(model, examples, True))


def text_examples(ctx: PipelineContext, kind: AttackKind, split: str) -> List[AdversarialExample]:
    """Attack the training subset or the test set of the classification corpus (cached per kind/split)"""
    def build():
        model, corpus = ctx.text_model(), ctx.corpus()
        dataset = ctx.train_subset(corpus.train) if split == "train" else corpus.test
        if kind == AttackKind.SUBSTITUTION:
            return ctx.substitution_examples(model, dataset)
        if kind == AttackKind.PGD:
            return ctx.pgd_examples(model, dataset)
        return ctx.concatenation_examples(model, dataset)
    return ctx.cached(f"examples:{kind.value}:{split}", build)


def text_pairs(ctx: PipelineContext, kind: AttackKind, split: str) -> AttackPairs:
    return ctx.cached(f"pairs:{kind.value}:{split}",
                      lambda: build_pairs(ctx.text_model(), text_examples(ctx, kind, split)))


def grid_pairs(ctx: PipelineContext, quantized: bool, split: str) -> AttackPairs:
    def build():
        model, corpus = ctx.grid_model(quantized), ctx.grid_corpus(quantized)
        if split == "train":
            limit = ctx.config.detectors.train_pairs_limit or len(corpus.train_grids)
            grids, labels = corpus.train_grids[:limit], corpus.train_labels[:limit]
        else:
            grids, labels = corpus.test_grids, corpus.test_labels
        return build_pairs(model, ctx.grid_examples(model, grids, labels, quantized))
    return ctx.cached(f"grid-pairs:{quantized}:{split}", build)


def text_suite(ctx: PipelineContext, stage: str) -> DetectorSuite:
    model, corpus = ctx.text_model(), ctx.corpus()
    clean = ctx.cached("clean-embeddings:text", lambda: model.sentence_embeddings(corpus.train.sequences()))
    return DetectorSuite(ctx, model, clean, corpus.train.labels(), corpus, stage)


def grid_suite(ctx: PipelineContext, quantized: bool) -> DetectorSuite:
    model, corpus = ctx.grid_model(quantized), ctx.grid_corpus(quantized)
    return DetectorSuite(ctx, model, model.encode_batch(corpus.train_grids), corpus.train_labels,
                         stage=f"grid-{'quantized' if quantized else 'continuous'}")


def substitution_detection(ctx: PipelineContext) -> SuiteResult:
    """Detector zoo fitted and evaluated on the substitution attack (shared by several experiments)"""
    return ctx.cached("suite:substitution", lambda: text_suite(ctx, "substitution").run(
        text_pairs(ctx, AttackKind.SUBSTITUTION, "train"), text_pairs(ctx, AttackKind.SUBSTITUTION, "test")))


def residue_advantage(result: SuiteResult) -> Optional[float]:
    """Residue best F1 minus the best of the Mahalanobis and uncertainty detectors"""
    others = [result.f1(d) for d in ("mahalanobis", "uncertainty") if d in result.reports]
    if "residue" not in result.reports or not others:
        return None
    return result.f1("residue") - max(others)


def write_curves(out_dir: str, result: SuiteResult, prefix: str = ""):
    for detector_id, report in sorted(result.reports.items()):
        report.write_curve_csv(os.path.join(out_dir, f"{prefix}curve_{detector_id}.csv"))


class Experiment(ABC):
    """Abstract base class for all experiments"""

    experiment_id: ExperimentId

    @abstractmethod
    def run(self, ctx: PipelineContext, out_dir: str) -> Dict[str, Any]:
        """Run the pipeline, write artifacts into out_dir and return the numeric report"""
        pass


class AttackImpactExperiment(Experiment):
    """Fooling rate per budget, PGD fooling rate and the regression score shift"""

    experiment_id = ExperimentId.TABLE3

    def run(self, ctx, out_dir):
        model, corpus = ctx.text_model(), ctx.corpus()
        substitution = {}
        for n in range(1, ctx.config.attack.budget + 1):
            examples = ctx.substitution_examples(model, corpus.test, budget=n)
            substitution[str(n)] = examples_fooling_rate(model, examples)
            logger.info(f"Substitution N={n}: fooling rate {substitution[str(n)]:.4f}")

        reg_model, reg_corpus = ctx.text_model(regression=True), ctx.corpus(regression=True)
        reg_examples = ctx.concatenation_examples(reg_model, reg_corpus.test, regression=True)
        shift = mean_score_shift(reg_model, [e.original for e in reg_examples], [e.perturbed for e in reg_examples])
        return {
            "substitution_fooling_rate": substitution,
            "concatenation_fooling_rate": examples_fooling_rate(
                model, text_examples(ctx, AttackKind.CONCATENATION, "test")),
            "pgd_fooling_rate": examples_fooling_rate(model, text_examples(ctx, AttackKind.PGD, "test")),
            "regression_concatenation": {"budget": ctx.config.attack.concat_length, "score_shift": shift},
        }


class DetectorComparisonExperiment(Experiment):
    """Best F1 of every detector under the substitution attack"""

    experiment_id = ExperimentId.TABLE4

    def run(self, ctx, out_dir):
        result = substitution_detection(ctx)
        write_curves(out_dir, result)
        test = text_pairs(ctx, AttackKind.SUBSTITUTION, "test")
        return {
            "attack": AttackKind.SUBSTITUTION.value,
            "budget": ctx.config.attack.budget,
            "fooling_rate": test.fooling_rate,
            "train_pairs": len(text_pairs(ctx, AttackKind.SUBSTITUTION, "train")),
            "test_pairs": len(test),
            "detectors": result.summary(),
            "skipped": result.skipped,
            "residue_advantage": residue_advantage(result),
        }


class SuppressionExperiment(Experiment):
    """Fooling rates with and without rejecting detector-flagged candidates"""

    experiment_id = ExperimentId.TABLE5

    def run(self, ctx, out_dir):
        model, corpus = ctx.text_model(), ctx.corpus()
        result = substitution_detection(ctx)
        if result.residue is None:
            raise DataError("suppression needs the residue detector in detectors.detectors")
        override = ctx.config.attack.suppression_threshold
        beta = result.reports["residue"].best_threshold if override is None else override
        scorer = ResidueScorer(result.residue, model)
        cfg = ctx.attack_config(AttackKind.SUBSTITUTION)
        constrained = attack_all(
            lambda s: detection_aware_attack(pwws_substitute, scorer, beta, model, s.tokens, cfg,
                                             corpus.lexicon, int(s.label)),
            corpus.test.samples, ctx.threads)
        without = examples_fooling_rate(model, text_examples(ctx, AttackKind.SUBSTITUTION, "test"))
        with_detection = examples_fooling_rate(model, constrained)
        logger.info(f"Suppression: fooling rate {without:.4f} -> {with_detection:.4f} (beta {beta:.4f})")
        return {
            "beta": beta,
            "substitution": {
                "fooling_rate": without,
                "fooling_rate_detection_aware": with_detection,
                "ratio": with_detection / without if without > 0 else None,
                "original_flagged": sum(bool(e.details.get("original_flagged")) for e in constrained),
            },
            "regression_concatenation": self._regression(ctx),
        }

    @staticmethod
    def _regression(ctx: PipelineContext) -> Dict[str, Any]:
        """Score shift of the universal suffix with and without a residue detector in the loop"""
        reg_model, reg_corpus = ctx.text_model(regression=True), ctx.corpus(regression=True)
        train_pairs = edited_pairs(reg_model, ctx.concatenation_examples(
            reg_model, ctx.train_subset(reg_corpus.train), regression=True))
        test_examples = ctx.concatenation_examples(reg_model, reg_corpus.test, regression=True)
        test_pairs = edited_pairs(reg_model, test_examples)
        detector = fit_residue(ctx, train_pairs, "regression-concatenation")
        scores = np.concatenate([detector.scores(test_pairs.original_embeddings),
                                 detector.scores(test_pairs.adversarial_embeddings)])
        labels = np.concatenate([np.zeros(len(test_pairs)), np.ones(len(test_pairs))])
        report = evaluate_detection(scores, labels, "residue")
        beta = report.best_threshold
        override = ctx.config.attack.suppression_threshold
        if override is not None:
            beta = override
        gate = DetectorGate(ResidueScorer(detector, reg_model), beta)
        gated = ctx.concatenation_examples(reg_model, reg_corpus.test, regression=True, gate=gate)
        return {
            "beta": beta,
            "detector_f1": report.best_f1,
            "score_shift": mean_score_shift(reg_model, [e.original for e in test_examples],
                                            [e.perturbed for e in test_examples]),
            "score_shift_detection_aware": mean_score_shift(reg_model, [e.original for e in gated],
                                                            [e.perturbed for e in gated]),
            "rejected": sum(bool(e.details.get("rejected")) for e in gated),
        }


def _substitution_profiles(ctx: PipelineContext):
    model, corpus = ctx.text_model(), ctx.corpus()
    clean = ctx.cached("clean-embeddings:text", lambda: model.sentence_embeddings(corpus.train.sequences()))
    pca = ctx.cached("pca:text", lambda: fit_pca(clean))
    test = text_pairs(ctx, AttackKind.SUBSTITUTION, "test")
    if len(test) == 0:
        raise DataError("the substitution attack produced no successful pairs to profile")
    return pca, test


class ResidueProfileExperiment(Experiment):
    """Average eigen-component magnitudes of original and attacked embeddings"""

    experiment_id = ExperimentId.FIG1

    def run(self, ctx, out_dir):
        pca, test = _substitution_profiles(ctx)
        orig = component_profile(pca, test.original_embeddings)
        attack = component_profile(pca, test.adversarial_embeddings)
        write_profile_csv(os.path.join(out_dir, "profile.csv"), orig, attack)

        plot = LinePlot("Encoder embedding residue profile", "eigenvector rank", "average component magnitude")
        ranks = list(range(pca.dim))
        plot.add_series("original", ranks, orig.rho)
        plot.add_series("attacked", ranks, attack.rho)
        plot.save(os.path.join(out_dir, "profile.svg"))

        a = ctx.config.analysis
        start, stop = min(a.central_start, pca.dim), min(a.central_stop, pca.dim)
        detail = n_sigma_detail(orig, attack, a.nsigma_ranks)
        return {
            "dim": pca.dim,
            "pairs": len(test),
            "central_ranks": [start, stop],
            "residue_gap": residue_gap(orig, attack, start, stop),
            "n_sigma": detail.value,
            "n_sigma_excluded_ranks": detail.excluded_ranks,
        }


class WindowSweepExperiment(Experiment):
    """Classifier accuracy and residue F1 for every eigen-window start"""

    experiment_id = ExperimentId.FIG2

    def run(self, ctx, out_dir):
        model = ctx.text_model()
        pca, test = _substitution_profiles(ctx)
        train = text_pairs(ctx, AttackKind.SUBSTITUTION, "train")
        data = SweepData(train.original_embeddings, train.adversarial_embeddings,
                         test.original_embeddings, test.adversarial_embeddings, test.labels)
        width = ctx.config.analysis.window
        records = window_sweep(model.head, pca, data, width,
                               default_trainer(residue_hyperparams(ctx, "window-sweep")), ctx.threads)
        write_sweep_csv(os.path.join(out_dir, "sweep.csv"), records)

        plot = LinePlot(f"Windowed projection sweep (w = {width})", "window start p", "value")
        starts = [r.start for r in records]
        plot.add_series("classifier accuracy", starts, [r.accuracy for r in records])
        plot.add_series("residue detector F1", starts, [r.f1 for r in records])
        plot.save(os.path.join(out_dir, "sweep.svg"))

        accuracy_peak, f1_peak = sweep_peaks(records)
        return {"window": width, "accuracy_peak": accuracy_peak, "f1_peak": f1_peak,
                "records": [{"p": r.start, "accuracy": r.accuracy, "f1": r.f1} for r in records]}


class MagnitudeExperiment(Experiment):
    """N-sigma and input-embedding perturbation norms of the discrete and continuous attacks"""

    experiment_id = ExperimentId.TABLE6

    def run(self, ctx, out_dir):
        model = ctx.text_model()
        pca, _ = _substitution_profiles(ctx)
        out = {}
        for kind in (AttackKind.SUBSTITUTION, AttackKind.PGD):
            pairs = text_pairs(ctx, kind, "test")
            if len(pairs) == 0:
                raise DataError(f"the {kind.value} attack produced no successful pairs")
            detail = n_sigma_detail(component_profile(pca, pairs.original_embeddings),
                                    component_profile(pca, pairs.adversarial_embeddings),
                                    ctx.config.analysis.nsigma_ranks)
            originals = [model.embed(e.original) for e in pairs.examples]
            if kind == AttackKind.PGD:
                perturbed = [e.perturbed for e in pairs.examples]
            else:
                perturbed = [model.embed(e.perturbed) for e in pairs.examples]
            out[kind.value] = {"pairs": len(pairs), "n_sigma": detail.value,
                               "norms": perturbation_norms(originals, perturbed).to_dict()}
        disc, cont = out[AttackKind.SUBSTITUTION.value], out[AttackKind.PGD.value]
        cont_linf = cont["norms"]["linf_mean"]
        out["linf_ratio"] = disc["norms"]["linf_mean"] / cont_linf if cont_linf > 0 else None
        out["epsilon"] = ctx.embedding_epsilon(model)
        return out


class PortabilityExperiment(Experiment):
    """Embedding-space detectors across discrete/continuous attacks in the text and grid domains"""

    experiment_id = ExperimentId.TABLE8

    def run(self, ctx, out_dir):
        domains = {
            "nlp_discrete": (text_suite(ctx, "substitution"), text_pairs(ctx, AttackKind.SUBSTITUTION, "train"),
                             text_pairs(ctx, AttackKind.SUBSTITUTION, "test")),
            "nlp_continuous": (text_suite(ctx, "pgd"), text_pairs(ctx, AttackKind.PGD, "train"),
                               text_pairs(ctx, AttackKind.PGD, "test")),
            "image_discrete": (grid_suite(ctx, True), grid_pairs(ctx, True, "train"), grid_pairs(ctx, True, "test")),
            "image_continuous": (grid_suite(ctx, False), grid_pairs(ctx, False, "train"),
                                 grid_pairs(ctx, False, "test")),
        }
        detectors = [d for d in EMBEDDING_DETECTORS if d in ctx.config.detectors.detectors]
        out: Dict[str, Any] = {}
        for name, (suite, train, test) in domains.items():
            logger.info(f"Portability domain {name}: {len(train)} train / {len(test)} test pairs")
            result = suite.run(train, test, detectors)
            write_curves(out_dir, result, prefix=f"{name}_")
            out[name] = {"fooling_rate": test.fooling_rate, "test_pairs": len(test),
                         "detectors": result.summary(), "skipped": result.skipped,
                         "residue_advantage": residue_advantage(result)}
        disc, cont = out["nlp_discrete"]["residue_advantage"], out["nlp_continuous"]["residue_advantage"]
        out["advantage_drop"] = disc - cont if disc is not None and cont is not None else None
        return out


class TransferExperiment(Experiment):
    """Residue detector trained on substitution pairs, tested on concatenation pairs"""

    experiment_id = ExperimentId.TRANSFER

    def run(self, ctx, out_dir):
        detector = fit_residue(ctx, text_pairs(ctx, AttackKind.SUBSTITUTION, "train"), "transfer")
        out = {}
        for kind in (AttackKind.SUBSTITUTION, AttackKind.CONCATENATION):
            test = text_pairs(ctx, kind, "test")
            scores = np.concatenate([detector.scores(test.original_embeddings),
                                     detector.scores(test.adversarial_embeddings)])
            labels = np.concatenate([np.zeros(len(test)), np.ones(len(test))])
            report = evaluate_detection(scores, labels, f"residue-{kind.value}")
            out[kind.value] = {"f1": report.best_f1, "test_pairs": len(test), "fooling_rate": test.fooling_rate}
        base = out[AttackKind.SUBSTITUTION.value]["f1"]
        out["retention"] = out[AttackKind.CONCATENATION.value]["f1"] / base if base > 0 else None
        return out


class ExperimentRegistry:
    """Maps experiment ids to their pipelines"""

    def __init__(self):
        self._experiments: Dict[str, Experiment] = {}

    def register(self, experiment: Experiment):
        self._experiments[experiment.experiment_id.value] = experiment

    def get(self, experiment_id: str) -> Experiment:
        if experiment_id not in self._experiments:
            raise UnknownExperimentError(f"experiment.experiment: unknown experiment id '{experiment_id}'")
        return self._experiments[experiment_id]

    def ids(self) -> List[str]:
        return sorted(self._experiments)


_registry: Optional[ExperimentRegistry] = None


def get_registry() -> ExperimentRegistry:
    """Get the global experiment registry"""
    global _registry
    if _registry is None:
        _registry = ExperimentRegistry()
        for experiment in (AttackImpactExperiment(), DetectorComparisonExperiment(), SuppressionExperiment(),
                           ResidueProfileExperiment(), WindowSweepExperiment(), MagnitudeExperiment(),
                           PortabilityExperiment(), TransferExperiment()):
            _registry.register(experiment)
    return _registry


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version(), "residuebench": __version__, "numpy": np.__version__}
    try:
        versions["packaging"] = metadata.version("packaging")
    except metadata.PackageNotFoundError:
        versions["packaging"] = "unknown"
    return versions


def write_manifest(ctx: PipelineContext, out_dir: str):
    stages = ("corpus", "model", "corpus-regression", "model-regression", "grid-corpus", "mc-dropout")
    manifest = {
        "experiment": ctx.config.experiment.experiment,
        "seeds": {"seed": ctx.seed, **{stage: derive_seed(ctx.seed, stage) for stage in stages}},
        "versions": package_versions(),
        "runtimes_seconds": dict(sorted(ctx.runtimes.items())),
        "inputs_sha256": dict(sorted(ctx.inputs.items())),
        "config": ctx.config.to_dict(),
    }
    write_json(os.path.join(out_dir, MANIFEST_FILE), manifest)


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> Dict[str, Any]:
    """Run the configured experiment end to end; writes report.json and manifest.json"""
    experiment = get_registry().get(cfg.experiment.experiment)
    ctx = PipelineContext(cfg)
    out_dir = out_dir or cfg.experiment.output_dir
    os.makedirs(out_dir, exist_ok=True)
    logger.info(f"Running experiment {experiment.experiment_id.value} (seed {ctx.seed}) into {out_dir}")
    with ctx.timed("experiment"):
        results = experiment.run(ctx, out_dir)
    report = {"experiment": experiment.experiment_id.value, "seed": ctx.seed, "results": results}
    write_json(os.path.join(out_dir, REPORT_FILE), report)
    write_manifest(ctx, out_dir)
    return stable(report)
