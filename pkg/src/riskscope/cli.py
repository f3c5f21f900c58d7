"""Command line entry point: riskscope <stage> --config path [--set k=v].

Exit codes: 0 success, 2 config error, 3 data error, 4 provider error,
5 estimation error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, DataError, EstimationError, ProviderError, RiskscopeError
from .pipeline import STAGES, Pipeline, PipelineConfig

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_PROVIDER = 4
EXIT_ESTIMATION = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskscope",
        description="Earnings-call risk exposure measurement and validation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for stage in (*STAGES, "all"):
        p = sub.add_parser(stage, help=f"run the {stage} stage" if stage != "all" else "run every stage")
        p.add_argument("--config", required=True, help="path to the JSON config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (value parsed as JSON when possible)",
        )

    synth = sub.add_parser("synth", help="write a seeded synthetic fixture (inputs + config)")
    synth.add_argument("--directory", required=True, help="where to write the fixture")
    synth.add_argument("--seed", type=int, default=7)
    synth.add_argument("--clean-calls", type=int, default=2)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)

    try:
        if args.command == "synth":
            from .synth import write_fixture

            write_fixture(args.directory, seed=args.seed, n_clean=args.clean_calls)
            print(f"fixture written to {args.directory} (config.json inside)")
            return 0
        config = PipelineConfig.from_file(args.config, args.overrides)
        pipeline = Pipeline(config)
        for report in pipeline.run(args.command):
            status = "done" if report.executed else "up-to-date"
            print(f"{report.stage}: {status}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EstimationError as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except RiskscopeError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
