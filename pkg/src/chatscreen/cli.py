"""Command-line entry point.

Subcommands run the pipeline stages over a configuration file; every run
is reproducible from that file plus the seed. Exit codes: 0 success,
1 usage error, 2 data/format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .config import PipelineConfig, apply_strict_paper, load_config
from .errors import DataFormatError, NumericError, UsageError

_STAGES = {
    "preprocess": pipeline.run_preprocess,
    "build-vocab": pipeline.run_build_vocab,
    "train-lm": pipeline.run_train_lm,
    "eval-lm": pipeline.run_eval_lm,
    "vectorize": pipeline.run_vectorize,
    "train-scd": pipeline.run_train_scd,
    "eval-scd": pipeline.run_eval_scd,
    "train-author": pipeline.run_train_author,
    "score-authors": pipeline.run_score_authors,
    "identify": pipeline.run_identify,
    "pipeline": pipeline.run_pipeline,
    "synth": pipeline.run_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chatscreen",
        description="Chat-log screening: LSTM sentence vectors, conversation "
                    "classification, and author scoring.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", help="configuration file (key = value "
                                        "with [section] headers)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--strict-paper", action="store_true",
                       help="disable gate biases and padding masking")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for bad usage; our contract says 1
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    try:
        cfg = load_config(args.config) if args.config else PipelineConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.strict_paper:
            apply_strict_paper(cfg)
        _STAGES[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
