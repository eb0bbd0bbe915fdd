"""Command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from lemmaloop import orchestrator
from lemmaloop.config import ConfigError, load_config
from lemmaloop.embedding import ProviderError as EmbeddingProviderError
from lemmaloop.library import Library, SchemaVersionMismatch
from lemmaloop.llm import BudgetExhausted, ProviderError
from lemmaloop.verifier import CheckerUnavailable

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_UNAVAILABLE = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lemmaloop", description="Learn a lemma library while proving Lean theorems.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run wake-sleep cycles over a training set")
    t.add_argument("--config", required=True, type=Path)
    t.add_argument("--dataset", required=True, type=Path)
    t.add_argument("--resume", metavar="RUN_ID", help="continue an earlier run")
    t.add_argument("--run-id")
    t.add_argument("--runs-dir")
    t.add_argument("--cycles", type=int)
    t.add_argument("--seed", type=int)

    p = sub.add_parser("prove", help="prove a test set with a learned library")
    p.add_argument("--library", required=True, type=Path)
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, help="output directory (default: <runs-dir>/<run-id>/inference)")

    s = sub.add_parser("stats", help="print summary tables for a run")
    s.add_argument("--run", required=True, help="run id under --runs-dir, or a run directory")
    s.add_argument("--runs-dir", default="runs")

    lib = sub.add_parser("library", help="library utilities")
    lib_sub = lib.add_subparsers(dest="library_command", required=True)
    inspect = lib_sub.add_parser("inspect", help="print library statistics")
    inspect.add_argument("file", type=Path)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    changes = {}
    for key in ("run_id", "runs_dir", "cycles", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            changes[key] = value
    if getattr(args, "resume", None):
        changes["run_id"] = args.resume
    return changes


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    config = config.replace(**_overrides(args))
    dataset = orchestrator.load_dataset(args.dataset)
    result = orchestrator.train(dataset, config, resume=bool(args.resume))
    print(orchestrator.stats_text(result.run_dir), end="")
    print(f"library: {result.run_dir / orchestrator.LIBRARY_FILE}")
    return EXIT_OK


def cmd_prove(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    dataset = orchestrator.load_dataset(args.dataset)
    try:
        library = Library.load(args.library)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load library {args.library}: {exc}") from exc
    out = args.out or orchestrator.run_dir_for(config) / "inference"
    result = orchestrator.prove(dataset, library, config, out_dir=out)
    m = result.metrics
    print(f"solved {m.solved}/{m.total}, mean proof length {m.mean_proof_length}, "
          f"output tokens/sample {m.tokens_per_sample}k")
    print(orchestrator.library_table(m))
    print(f"results: {out}")
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    run = Path(args.run)
    run_dir = run if run.is_dir() else Path(args.runs_dir) / args.run
    print(orchestrator.stats_text(run_dir), end="")
    return EXIT_OK


def cmd_library(args: argparse.Namespace) -> int:
    print(orchestrator.inspect_library_text(args.file), end="")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "prove": cmd_prove, "stats": cmd_stats, "library": cmd_library}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SchemaVersionMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProviderError, EmbeddingProviderError, CheckerUnavailable) as exc:
        print(f"unavailable: {exc}", file=sys.stderr)
        return EXIT_UNAVAILABLE
    except BudgetExhausted as exc:
        print(f"stopped: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
