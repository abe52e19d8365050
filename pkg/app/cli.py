"""Command line surface: one subcommand per experiment."""

import argparse
import json
import logging
import sys
from typing import List, Optional

from app.config import Config, load_experiment_config
from app.services.experiment_service import EXPERIMENTS, run_experiment
from app.utils.error_handler import ErrorHandler
from app.utils.errors import DisbayesError

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disbayes",
        description="Distributed Bayes rule on graphs and its frequentist checks.",
    )
    subparsers = parser.add_subparsers(dest="experiment", required=True)
    for name, runner in EXPERIMENTS.items():
        sub = subparsers.add_parser(name, help=(runner.__doc__ or "").strip().splitlines()[0])
        sub.add_argument("--config", required=True, help="TOML experiment file")
        sub.add_argument("--seed", type=int, default=None, help="master seed, overrides run.seed")
        sub.add_argument("--out", default=None, help="output directory, overrides output.directory")
        sub.add_argument("--workers", type=int, default=None, help="worker threads, overrides run.workers")
        sub.add_argument("--resume", action="store_true", help="skip units already written to the output directory")
    return parser


def configure_logging(level: Optional[str] = None):
    level = (level or Config.LOG_LEVEL).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    Config.validate()
    try:
        config = load_experiment_config(args.config, seed=args.seed, out=args.out, workers=args.workers)
        summary = run_experiment(args.experiment, config, resume=args.resume)
    except DisbayesError as e:
        sys.stderr.write(ErrorHandler.create_user_friendly_response(ErrorHandler.format_error(e)))
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("interrupted; rerun with --resume to continue")
        return 130
    sys.stdout.write(json.dumps(summary.results, indent=2, default=str) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
