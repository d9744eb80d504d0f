"""Command-line entry point for the staged campaign pipeline.

Exit codes: 0 success, 2 validation error, 3 numerical failure
(divergence or singular system), 4 artifact/IO error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import (
    ArtifactError,
    ConfigError,
    DivergenceError,
    InvalidInputError,
    SingularSystemError,
)
from .pipeline import STAGES, Pipeline, list_artifacts, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_ARTIFACT = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promkit",
        description="Reduced-order-model campaign pipeline "
                    "(fom, pod, rom-train, left-basis, ecm, hrom, compare).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="path to a JSON config file")
        p.add_argument("--out", default="out", help="artifact output directory")
        p.add_argument("--strategy", action="append", default=None,
                       help="restrict to a strategy (repeatable)")
        p.add_argument("--seed", type=int, default=None,
                       help="seed recorded for randomized diagnostics")

    run = sub.add_parser("run", help="run every stage in order")
    add_common(run)

    stage = sub.add_parser("stage", help="run a single stage")
    stage.add_argument("name", choices=STAGES)
    add_common(stage)

    validate = sub.add_parser("validate", help="validate a config file")
    validate.add_argument("--config", required=True)

    artifacts = sub.add_parser("list-artifacts", help="list stored artifacts")
    artifacts.add_argument("--out", default="out")
    return parser


def _apply_strategy_override(config, strategies):
    if not strategies:
        return config
    from .pipeline import validate_config

    payload = config.canonical()
    payload["strategies"] = strategies
    return validate_config(payload)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            load_config(args.config)
            print("config ok")
            return EXIT_OK
        if args.command == "list-artifacts":
            for row in list_artifacts(args.out):
                print(f"{row['stage']:<12} {row['sha256'][:12]}  {row['path']}")
            return EXIT_OK

        config = _apply_strategy_override(load_config(args.config), args.strategy)
        pipeline = Pipeline(config, args.out, seed=args.seed)
        if args.command == "run":
            summary = pipeline.run_all()
            print(json.dumps(summary))
            return EXIT_OK
        if args.command == "stage":
            pipeline.run_stage(args.name)
            state = "executed" if args.name in pipeline.executed else "up-to-date"
            print(f"stage {args.name}: {state}")
            return EXIT_OK
    except (ConfigError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, SingularSystemError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ArtifactError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
