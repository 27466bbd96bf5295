"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import ConfigError, ProtocolMalformed
from .harness import (
    CHECK_COLUMNS,
    emit_report,
    emit_table,
    enumerate_table,
    load_config,
    run_simulation,
    sweep_beta,
    verify,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retrosim",
        description="Exact and Monte Carlo statistics for biased quantum choice in Bem-style protocols.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="JSON run configuration")
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--format", choices=("csv", "json"), help="overrides the config's format")
        return p

    command("enumerate", "print the exact history ensemble")
    for name, text in (("simulate", "run the Monte Carlo simulation"), ("sweep", "simulate over several beta values")):
        p = command(name, text)
        p.add_argument("--workers", type=int, help="threads used for trial chunks")
        if name == "sweep":
            p.add_argument("--betas", type=float, nargs="*", required=True, help="bias values to sweep")
    command("verify", "check all invariants for the configured protocol")
    return parser


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config)
        fmt = args.format or config.format
        if getattr(args, "workers", None) is not None:
            config = replace(config, workers=args.workers)

        if args.command == "enumerate":
            rows, columns = enumerate_table(config)
            _write(emit_table(rows, columns, fmt, args.out), args.out)
        elif args.command == "simulate":
            _write(emit_report(run_simulation(config), fmt, args.out), args.out)
        elif args.command == "sweep":
            _write(emit_report(sweep_beta(config, args.betas), fmt, args.out), args.out)
        else:
            report = verify(config)
            _write(emit_table(report.rows(), CHECK_COLUMNS, fmt, args.out), args.out)
            if not report.passed:
                print(f"verification failed for {report.protocol}", file=sys.stderr)
                return EXIT_VERIFY
    except (ConfigError, ProtocolMalformed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
