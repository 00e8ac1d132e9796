"""Config-driven experiment runner.

Commands: prepare (synthesize noise + ledger), run (full pipeline or
resume), evaluate (checkpoint -> metrics CSV), reproduce-desk-suite (the
desk-scale verification battery). Exit codes: 0 success, 1 usage/config
error, 2 runtime failure.
"""

import argparse
import os
import sys
from dataclasses import replace

from labelrefinery import evaluation, noise
from labelrefinery.config import RunConfig, load_config, save_config
from labelrefinery.exceptions import ConfigError, PipelineError

DATA_DIR_ENV = "LABELREFINERY_DATA_DIR"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser():
    parser = _Parser(prog="labelrefinery",
                     description="Noisy-label training with iterative pseudo-label refinement")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="path to a run config JSON file")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--output-dir", help="override the output directory")
        p.add_argument("--dataset-path", help="override the dataset path")
        p.add_argument("--noise-rate", type=float, help="override the noise target rate")

    p_prepare = sub.add_parser("prepare", help="synthesize noisy labels and write the flip ledger")
    add_common(p_prepare)

    p_run = sub.add_parser("run", help="run pretrain + warmup + refinement iterations")
    add_common(p_run)
    p_run.add_argument("--iterations", type=int, help="override the number of refinement iterations")
    p_run.add_argument("--resume", help="iteration checkpoint to resume from")

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint on the test split")
    add_common(p_eval)
    p_eval.add_argument("checkpoint", help="checkpoint file to evaluate")
    p_eval.add_argument("--report", help="where to write the metrics CSV (default: stdout path in output dir)")

    p_desk = sub.add_parser("reproduce-desk-suite",
                            help="run the desk-scale verification battery and print pass/fail lines")
    p_desk.add_argument("--workdir", default="runs/desk-suite", help="directory for the suite's runs")
    p_desk.add_argument("--quick", action="store_true",
                        help="skip the multi-seed efficacy battery (runs the cheap checks only)")
    return parser


def _effective_config(args):
    if args.config:
        config = load_config(args.config)
    else:
        config = RunConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "output_dir", None):
        config = replace(config, output_dir=args.output_dir)
    if getattr(args, "dataset_path", None):
        config = replace(config, dataset=replace(config.dataset, path=args.dataset_path))
    elif not config.dataset.path and os.environ.get(DATA_DIR_ENV):
        config = replace(config, dataset=replace(config.dataset, path=os.environ[DATA_DIR_ENV]))
    if getattr(args, "noise_rate", None) is not None:
        config = replace(config, noise=replace(config.noise, target_rate=args.noise_rate))
    if getattr(args, "iterations", None) is not None:
        config = replace(config, refinement=replace(config.refinement, iterations=args.iterations))
    return config


def _ledger_path(config):
    return os.path.join(config.output_dir, "ledger.csv")


def cmd_prepare(config):
    from labelrefinery.pipeline import prepare_noise
    os.makedirs(config.output_dir, exist_ok=True)
    train, _, ledger = prepare_noise(config)
    noise.write_ledger(_ledger_path(config), train.sample_ids, ledger)
    save_config(config, os.path.join(config.output_dir, "config.json"))
    stats = noise.noise_statistics(train, ledger)
    print(f"prepared {len(train)} samples, realized noise rate {stats.overall_rate:.4f}")
    print(f"ledger: {_ledger_path(config)}")
    return 0


def cmd_run(config, resume=None):
    from labelrefinery.pipeline import build_datasets, run_pipeline
    ledger_path = _ledger_path(config)
    if not os.path.isfile(ledger_path):
        raise ConfigError(f"no prepared noise ledger at {ledger_path}; run `labelrefinery prepare` first")
    train, test = build_datasets(config)
    sample_ids, ledger = noise.read_ledger(ledger_path)
    train = noise.apply_ledger(train, sample_ids, ledger)
    save_config(config, os.path.join(config.output_dir, "config.json"))
    result = run_pipeline(config, train, test, config.output_dir, resume_from=resume)
    print(f"warmup test accuracy : {result.warmup_accuracy:.4f}")
    print(f"final test accuracy  : {result.report.test_accuracy:.4f}")
    for row in result.report.quality_rows:
        print(f"iteration {row.iteration}: working-label accuracy {row.working_label_accuracy:.4f}, "
              f"consensus {row.consensus_size} (clean fraction {row.consensus_clean_fraction:.4f})")
    return 0


def cmd_evaluate(config, checkpoint_path, report_path=None):
    from labelrefinery.models import load_checkpoint
    from labelrefinery.pipeline import build_datasets
    if not os.path.isfile(checkpoint_path):
        raise ConfigError(f"checkpoint not found: {checkpoint_path}")
    state, phase, _ = load_checkpoint(checkpoint_path)
    _, test = build_datasets(config)
    acc = evaluation.accuracy(state, test)
    report = evaluation.MetricsReport(dataset=config.dataset.variant, noise_rate=config.noise.target_rate,
                                      method=phase, seed=config.seed, test_accuracy=acc)
    if report_path is None:
        os.makedirs(config.output_dir, exist_ok=True)
        report_path = os.path.join(config.output_dir, f"eval_{os.path.basename(checkpoint_path)}.csv")
    evaluation.emit_report([report], report_path)
    print(f"{phase} checkpoint accuracy: {acc:.4f} -> {report_path}")
    return 0


def cmd_desk_suite(workdir, quick=False):
    from labelrefinery import desk_suite
    results = desk_suite.run_suite(workdir, quick=quick)
    failed = 0
    for res in results:
        print(desk_suite.format_result(res))
        failed += 0 if res.passed else 1
    return 0 if failed == 0 else 2


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "prepare":
            return cmd_prepare(_effective_config(args))
        if args.command == "run":
            return cmd_run(_effective_config(args), resume=args.resume)
        if args.command == "evaluate":
            return cmd_evaluate(_effective_config(args), args.checkpoint, args.report)
        if args.command == "reproduce-desk-suite":
            return cmd_desk_suite(args.workdir, quick=args.quick)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PipelineError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
