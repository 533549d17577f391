"""The `mdtracker` command line: pretrain, track, eval, synth and gradcheck."""

# SPDX-License-Identifier: Apache-2.0

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from mdtracker.checkpoint import load_checkpoint, save_checkpoint
from mdtracker.config import DESK_CHANNEL_SCALE
from mdtracker.data_loading import (
    config_from_mapping,
    list_sequences,
    load_config_file,
    load_sequence,
    parse_groundtruth,
    read_results,
    save_overlay,
    save_sequence,
    write_results,
)
from mdtracker.engine.gradcheck import GRADIENT_CASES, run_gradient_suite
from mdtracker.evaluation import evaluate, write_curve_csv
from mdtracker.exceptions import InputError, MDTrackerException
from mdtracker.models.mdnet import INIT_SCHEMES, MDNet, MDNetConfig
from mdtracker.synthetic import generate_sequence, SyntheticSequenceSpec
from mdtracker.tracker import OnlineTracker, TrackerConfig
from mdtracker.training import (
    build_domain_dataset,
    domain_accuracy,
    pretrain,
    pretrain_single_domain,
    PretrainConfig,
)


logger = logging.getLogger(__name__)


GRADCHECK_FAILED = 1
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _settings(path: Optional[Path]) -> Dict[str, str]:
    return load_config_file(path) if path is not None else {}


def _rng(seed: Optional[int]) -> np.random.Generator:
    return np.random.default_rng(seed)


def _sibling(path: Path, suffix: str) -> Path:
    """`out/model.mdnc` -> `out/model_<suffix>.csv`"""
    return path.with_name(f"{path.stem}_{suffix}.csv")


# Subcommands
def run_pretrain(args: argparse.Namespace) -> int:
    sequence_dirs = list_sequences(args.data)
    if not sequence_dirs:
        raise InputError(f"No sequence directories found under {args.data}.")
    rng = _rng(args.seed)

    settings = _settings(args.config)
    settings["iterations"] = args.iters
    cfg = config_from_mapping(PretrainConfig, settings)

    datasets = [
        build_domain_dataset(load_sequence(directory), rng, domain_id=d, cfg=cfg)
        for d, directory in enumerate(sequence_dirs)
    ]
    num_branches = 1 if args.single_domain else len(datasets)
    net_config = MDNetConfig(
        num_domains=num_branches,
        channel_scale=args.scale,
        lrn_enabled=args.scale >= 1.0,
        init_scheme=args.init_scheme,
    )
    net = MDNet(net_config, rng)
    train = pretrain_single_domain if args.single_domain else pretrain
    result = train(net, datasets, cfg, rng)

    for d, dataset in enumerate(datasets):
        branch = 0 if args.single_domain else d
        logger.info(
            "Domain %d (%s): accuracy %.4f",
            d,
            sequence_dirs[d].name,
            domain_accuracy(net, dataset, branch),
        )

    save_checkpoint(net, args.out)
    trace = _sibling(args.out, "losses")
    with trace.open("w") as file:
        file.write("iteration,domain,loss\n")
        for k, (domain, loss) in enumerate(zip(result.domains, result.losses), 1):
            file.write(f"{k},{domain},{loss:.6f}\n")
    logger.info("Loss trace written to %s.", trace)
    return 0


def run_track(args: argparse.Namespace) -> int:
    net = load_checkpoint(args.model)
    sequence = load_sequence(args.seq)
    cfg = config_from_mapping(TrackerConfig, _settings(args.config))

    tracker = OnlineTracker(net, cfg, _rng(args.seed))
    result = tracker.track(sequence.frames, sequence.groundtruth[0])
    write_results(args.out, result.boxes)
    logger.info("Wrote %d boxes to %s.", len(result), args.out)

    if args.overlay is not None:
        for number, (frame, box, gt) in enumerate(
            zip(sequence.frames, result.boxes, sequence.groundtruth), start=1
        ):
            save_overlay(frame, [box, gt], args.overlay / f"{number:04d}.png")
        logger.info("Overlays written to %s.", args.overlay)
    return 0


def run_eval(args: argparse.Namespace) -> int:
    curves = evaluate(read_results(args.results), parse_groundtruth(args.gt))
    write_curve_csv(args.out, curves.success_thresholds, curves.success)
    write_curve_csv(
        _sibling(args.out, "precision"), curves.precision_thresholds, curves.precision
    )
    print(curves.summary_line())
    return 0


def run_synth(args: argparse.Namespace) -> int:
    spec = config_from_mapping(SyntheticSequenceSpec, load_config_file(args.spec))
    sequence = generate_sequence(spec)
    save_sequence(args.out, sequence.frames, sequence.groundtruth)
    return 0


def run_gradcheck(args: argparse.Namespace) -> int:
    ops = [op.strip() for op in args.ops.split(",") if op.strip()] if args.ops else None
    reports = run_gradient_suite(ops)
    failures = [report for report in reports if not report.passed]
    for report in reports:
        print(report)
    if failures:
        print(f"{len(failures)} of {len(reports)} gradient checks FAILED")
        return GRADCHECK_FAILED
    print(f"All {len(reports)} gradient checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdtracker",
        description="Multi-domain CNN visual tracking at desk scale.",
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="root logger level (default: INFO)",
    )
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    command = commands.add_parser("pretrain", help="multi-domain pretraining")
    command.add_argument(
        "--data", type=Path, required=True, help="directory of sequence directories"
    )
    command.add_argument("--out", type=Path, required=True, help="checkpoint path")
    command.add_argument("--iters", type=int, required=True, help="SGD iterations")
    command.add_argument(
        "--scale",
        type=float,
        default=DESK_CHANNEL_SCALE,
        help="channel scale in (0, 1]; 1 is the full network",
    )
    command.add_argument("--seed", type=int, default=None)
    command.add_argument(
        "--init-scheme",
        choices=INIT_SCHEMES,
        default="fan_in",
        help="initialization of the shared layers",
    )
    command.add_argument(
        "--single-domain",
        action="store_true",
        help="train one branch on pooled sequences",
    )
    command.add_argument(
        "--config",
        type=Path,
        default=None,
        help="key=value file of pretraining options",
    )
    command.set_defaults(handler=run_pretrain)

    command = commands.add_parser("track", help="track one sequence")
    command.add_argument("--model", type=Path, required=True, help="checkpoint path")
    command.add_argument("--seq", type=Path, required=True, help="sequence directory")
    command.add_argument("--out", type=Path, required=True, help="results file")
    command.add_argument(
        "--overlay",
        type=Path,
        default=None,
        help="directory for frames with the boxes drawn",
    )
    command.add_argument("--seed", type=int, default=None)
    command.add_argument(
        "--config", type=Path, default=None, help="key=value file of tracker options"
    )
    command.set_defaults(handler=run_track)

    command = commands.add_parser("eval", help="one-pass evaluation of a results file")
    command.add_argument("--results", type=Path, required=True)
    command.add_argument("--gt", type=Path, required=True)
    command.add_argument(
        "--out",
        type=Path,
        required=True,
        help="success-curve CSV; the precision curve goes to <name>_precision.csv",
    )
    command.set_defaults(handler=run_eval)

    command = commands.add_parser("synth", help="render a synthetic sequence")
    command.add_argument(
        "--spec", type=Path, required=True, help="key=value file of sequence options"
    )
    command.add_argument("--out", type=Path, required=True, help="sequence directory")
    command.set_defaults(handler=run_synth)

    command = commands.add_parser("gradcheck", help="finite-difference gradient suite")
    command.add_argument(
        "--ops",
        default=None,
        help=f"comma-separated subset of {', '.join(GRADIENT_CASES)}",
    )
    command.set_defaults(handler=run_gradcheck)

    return parser


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code.

    Package errors map to their `exit_code`; usage errors from argparse exit
    with 2 after printing the usage text.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as error:
        return int(error.code or 0)

    logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
    try:
        return args.handler(args)
    except MDTrackerException as error:
        logger.error("%s: %s", error.__class__.__name__, error)
        return error.exit_code


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(cli_main(argv))


if __name__ == "__main__":
    main()
