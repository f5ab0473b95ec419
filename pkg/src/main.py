"""
ResidueBench command-line interface
Subcommands for corpus generation, training, attacks, detection, analysis and full experiments
"""
import argparse
import os
import sys
from typing import Dict, List, Optional

from src import __version__
from src.attacks.attack_types import AttackKind
from src.checkpoint import save_model
from src.corpus_parser import (load_scores, save_attack_results, save_dataset, save_frequency_table,
                               save_grid_set, save_lexicon)
from src.detectors.residue import save_residue_detector
from src.errors import ConfigError, WorkbenchError
from src.evaluation import evaluate_detection
from src.experiments import (ResidueProfileExperiment, WindowSweepExperiment, examples_fooling_rate, get_registry,
                             run_experiment, text_examples, text_pairs, text_suite, write_curves, write_json)
from src.logger import close_log_file, get_logger, log_to_file, set_debug_mode, set_log_level
from src.pipeline import PipelineContext
from src.settings import ExperimentConfig, get_settings_manager, reset_settings_manager

logger = get_logger(__name__)

TEXT_ATTACKS = [AttackKind.SUBSTITUTION.value, AttackKind.CONCATENATION.value, AttackKind.PGD.value]
GRID_ATTACKS = [AttackKind.GRID.value, AttackKind.GRID_PGD.value]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="residuebench",
                                     description="Adversarial residue detection workbench")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="settings file (key = value with [sections])")
    parser.add_argument("--seed", type=int, help="master seed (experiment.seed)")
    parser.add_argument("--out", help="output directory (experiment.output_dir)")
    parser.add_argument("--threads", type=int, help="worker threads for attack sweeps (experiment.threads)")
    parser.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config key; repeatable")
    parser.add_argument("--debug", action="store_true", help="debug logging")
    parser.add_argument("--log-level", help="log level name (overrides RESIDUEBENCH_LOG_LEVEL)")
    parser.add_argument("--log-file", help="also append log records to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic corpus, lexicon and frequency table")
    p.add_argument("--regression", action="store_true", help="score labels instead of classes")
    p.add_argument("--grid", action="store_true", help="also write the grid analog")

    p = sub.add_parser("train-model", help="train a model and save its checkpoint")
    p.add_argument("--grid", choices=["quantized", "continuous"], help="train the grid model instead")
    p.add_argument("--regression", action="store_true", help="regression head")
    p.add_argument("--data", help="training JSON-lines file (corpus.dataset_path)")
    p.add_argument("--test-data", help="test JSON-lines file (corpus.test_path)")

    p = sub.add_parser("attack", help="attack the test set and save the results")
    p.add_argument("--kind", choices=TEXT_ATTACKS + GRID_ATTACKS, default=AttackKind.SUBSTITUTION.value)
    p.add_argument("--model", help="text model checkpoint (model.checkpoint_path)")
    p.add_argument("--budget", type=int, help="edit budget N (attack.budget)")
    p.add_argument("--epsilon", type=float, help="PGD radius (attack.epsilon)")

    p = sub.add_parser("detect", help="fit and evaluate the detector zoo on one attack")
    p.add_argument("--attack", choices=TEXT_ATTACKS, default=AttackKind.SUBSTITUTION.value)
    p.add_argument("--model", help="text model checkpoint (model.checkpoint_path)")
    p.add_argument("--detectors", help="comma-separated detector ids (detectors.detectors)")

    p = sub.add_parser("analyze", help="PCA residue profile, optionally with the window sweep")
    p.add_argument("--model", help="text model checkpoint (model.checkpoint_path)")
    p.add_argument("--sweep", action="store_true", help="also run the windowed projection sweep")
    p.add_argument("--window", type=int, help="window width (analysis.window)")

    p = sub.add_parser("eval", help="evaluate a score,label CSV file")
    p.add_argument("scores", help="CSV with score,label lines (1 = adversarial)")
    p.add_argument("--name", default="scores", help="detector id used in the report")

    p = sub.add_parser("experiment", help="run a full experiment pipeline")
    p.add_argument("name", nargs="?", help=f"one of: {', '.join(get_registry().ids())}")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    overrides: Dict[str, object] = {
        "experiment.seed": args.seed,
        "experiment.output_dir": args.out,
        "experiment.threads": args.threads,
    }
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"{item}: overrides must look like section.key=value")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    flag_keys = {
        "model": "model.checkpoint_path", "budget": "attack.budget", "epsilon": "attack.epsilon",
        "detectors": "detectors.detectors", "window": "analysis.window",
        "data": "corpus.dataset_path", "test_data": "corpus.test_path",
    }
    for attr, key in flag_keys.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value if not isinstance(value, (int, float)) else str(value)
    if args.command == "experiment" and args.name:
        overrides["experiment.experiment"] = args.name
    return overrides


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    reset_settings_manager()
    manager = get_settings_manager(args.config)
    manager.apply_overrides(_overrides(args))
    return manager.settings


def _out_dir(cfg: ExperimentConfig) -> str:
    os.makedirs(cfg.experiment.output_dir, exist_ok=True)
    return cfg.experiment.output_dir


def cmd_synth(cfg: ExperimentConfig, args) -> int:
    ctx = PipelineContext(cfg)
    corpus = ctx.corpus(args.regression)
    out = _out_dir(cfg)
    save_dataset(corpus.train, os.path.join(out, "train.jsonl"))
    save_dataset(corpus.test, os.path.join(out, "test.jsonl"))
    save_lexicon(corpus.lexicon, corpus.train.vocabulary, os.path.join(out, "lexicon.tsv"))
    save_frequency_table(corpus.frequency_table, os.path.join(out, "frequencies.tsv"))
    if args.grid:
        for quantized in (True, False):
            grids = ctx.grid_corpus(quantized)
            name = "quantized" if quantized else "continuous"
            save_grid_set(grids.train_grids, grids.train_labels, os.path.join(out, f"grid_{name}_train.npz"),
                          grids.levels)
            save_grid_set(grids.test_grids, grids.test_labels, os.path.join(out, f"grid_{name}_test.npz"),
                          grids.levels)
    print(f"Wrote {len(corpus.train)} train / {len(corpus.test)} test samples to {out}")
    return 0


def cmd_train_model(cfg: ExperimentConfig, args) -> int:
    ctx = PipelineContext(cfg)
    out = _out_dir(cfg)
    if args.grid:
        model = ctx.grid_model(args.grid == "quantized")
        path = os.path.join(out, f"grid_{args.grid}.ckpt")
    else:
        model = ctx.text_model(args.regression)
        path = os.path.join(out, "model_regression.ckpt" if args.regression else "model.ckpt")
    save_model(model, path)
    print(f"Saved {model.model_id} to {path}")
    return 0


def cmd_attack(cfg: ExperimentConfig, args) -> int:
    ctx = PipelineContext(cfg)
    out = _out_dir(cfg)
    kind = AttackKind(args.kind)
    if kind.value in GRID_ATTACKS:
        quantized = kind == AttackKind.GRID
        model, grids = ctx.grid_model(quantized), ctx.grid_corpus(quantized)
        examples = ctx.grid_examples(model, grids.test_grids, grids.test_labels, quantized)
        vocabulary = None
    else:
        model = ctx.text_model()
        examples = text_examples(ctx, kind, "test")
        vocabulary = model.vocabulary
    path = os.path.join(out, f"attack_{kind.value}.jsonl")
    save_attack_results(examples, path, vocabulary)
    print(f"{kind.value}: fooling rate {examples_fooling_rate(model, examples):.4f} ({len(examples)} attacks) -> {path}")
    return 0


def cmd_detect(cfg: ExperimentConfig, args) -> int:
    ctx = PipelineContext(cfg)
    out = _out_dir(cfg)
    kind = AttackKind(args.attack)
    train, test = text_pairs(ctx, kind, "train"), text_pairs(ctx, kind, "test")
    result = text_suite(ctx, kind.value).run(train, test)
    write_curves(out, result, prefix=f"{kind.value}_")
    if result.residue is not None:
        save_residue_detector(result.residue, os.path.join(out, f"residue_{kind.value}.ckpt"))
    write_json(os.path.join(out, f"detect_{kind.value}.json"),
               {"attack": kind.value, "train_pairs": len(train), "test_pairs": len(test),
                "detectors": result.summary(), "skipped": result.skipped})
    for detector_id, report in sorted(result.reports.items()):
        print(f"{detector_id:12s} best F1 {report.best_f1:.4f}")
    return 0


def cmd_analyze(cfg: ExperimentConfig, args) -> int:
    ctx = PipelineContext(cfg)
    out = _out_dir(cfg)
    results = {"profile": ResidueProfileExperiment().run(ctx, out)}
    if args.sweep:
        results["sweep"] = WindowSweepExperiment().run(ctx, out)
    write_json(os.path.join(out, "analyze.json"), results)
    profile = results["profile"]
    print(f"residue gap {profile['residue_gap']:.4f}, N-sigma {profile['n_sigma']:.4f}")
    return 0


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    scores, labels = load_scores(args.scores)
    report = evaluate_detection(scores, labels, args.name)
    out = _out_dir(cfg)
    report.write_curve_csv(os.path.join(out, f"curve_{args.name}.csv"))
    report.write_summary_json(os.path.join(out, f"summary_{args.name}.json"))
    print(f"{args.name}: best F1 {report.best_f1:.4f} at threshold {report.best_threshold:.6g}")
    return 0


def cmd_experiment(cfg: ExperimentConfig, args) -> int:
    report = run_experiment(cfg)
    print(f"Experiment {report['experiment']} finished; report in {cfg.experiment.output_dir}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train-model": cmd_train_model,
    "attack": cmd_attack,
    "detect": cmd_detect,
    "analyze": cmd_analyze,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point"""
    args = build_parser().parse_args(argv)
    if args.log_level:
        set_log_level(args.log_level)
    if args.debug:
        set_debug_mode(True)
    log_file = log_to_file(args.log_file) if args.log_file else None
    try:
        cfg = load_config(args)
        if args.command != "eval":
            cfg.validate()
        return COMMANDS[args.command](cfg, args)
    except WorkbenchError as e:
        print(f"residuebench: error: {e}", file=sys.stderr)
        logger.debug("Failure details", exc_info=True)
        return e.exit_code
    finally:
        if log_file is not None:
            close_log_file(log_file)


if __name__ == "__main__":
    sys.exit(main())
