"""CLI for the lindiff package."""

from __future__ import annotations

import argparse
import logging
import math

from .config import ExperimentConfig, build_config, load_config, with_overrides
from .errors import ConfigError, DomainError, SolverError
from .meta import DESCRIPTION, NAME, VERSION
from .pipeline import COMMANDS, run
from .types import RunResult

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=NAME, description=DESCRIPTION)
    parser.add_argument("--version", action="version", version=f"{NAME} {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        cmd = sub.add_parser(command)
        cmd.add_argument("--config", help="key = value experiment file")
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--out", help="Output CSV path")
        cmd.add_argument("--threads", type=int)
        cmd.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        if command == "spectrum":
            cmd.add_argument("--k", type=float, help="Power-law exponent of the generated spectrum")
            cmd.add_argument("--d", type=int, help="Dimension of the generated spectrum")
            cmd.add_argument("--data", help="CSV data matrix to take the empirical spectrum from")
    return parser


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config) if args.config else build_config({})
    return with_overrides(
        config,
        seed=args.seed,
        out=args.out,
        threads=args.threads,
        k=getattr(args, "k", None),
        d=getattr(args, "d", None),
    )


def _print_summary(result: RunResult) -> None:
    kinds: dict[str, int] = {}
    failed = 0
    for record in result.records:
        kinds[record.kind] = kinds.get(record.kind, 0) + 1
        failed += bool(record.error)
    print("Summary")
    print(f"command={result.command} rows={len(result.records)} failed_rows={failed}")
    if kinds:
        print(" ".join(f"{kind}={count}" for kind, count in sorted(kinds.items())))
    for record in result.records:
        if record.kind == "c_star":
            print(f"c_star n={record.n} k={record.k:g} c={record.c:g} dkl={record.dkl:.6g}")
        elif record.kind == "tau_star" and not math.isnan(record.tau):
            print(f"tau_star n={record.n} k={record.k:g} tau={record.tau:.6g} test_loss={record.test_loss:.6g}")
        elif record.kind == "summary" and result.command == "memorization":
            print(
                f"similarity n={record.n} k={record.k:g} generated={record.similarity:.4g} "
                f"fresh={record.similarity_fresh:.4g}"
            )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")

    try:
        config = _resolve_config(args)
        print(f"Run started: {args.command}")
        result = run(args.command, config, data_path=getattr(args, "data", None))
    except ConfigError as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}")
        return EXIT_SOLVER
    except (DomainError, OSError) as exc:
        print(f"error: {exc}")
        return EXIT_FAILURE

    _print_summary(result)
    print(f"{args.command}.csv: {result.artifacts['csv_path']}")
    if result.warnings:
        print("Warnings:")
        for warning in dict.fromkeys(result.warnings):
            print(f"- {warning}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
