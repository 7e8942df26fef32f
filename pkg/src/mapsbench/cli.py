"""``maps`` command line.

Exit codes: 0 success, 2 configuration error, 3 provider failure, 4 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Sequence

from .analytics import AccuracyMatrix, DegenerateMatrix, rank_summary
from .corpus import CorpusError
from .engine import AttemptFailed
from .orchestrator import ConfigError, ExperimentConfig, LogError, load_experiment, load_price_sheet, run_experiment
from .providers import ProviderError
from .report import build_report, render_text, write_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_DATA = 4


def _decimal(text: str) -> Decimal:
    try:
        return Decimal(text)
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a decimal amount: {text!r}") from None


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    return cfg.with_overrides(
        parallel=getattr(args, "parallel", None),
        output_dir=Path(args.output_dir) if getattr(args, "output_dir", None) else None,
    )


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    outcome = run_experiment(cfg, live=args.live, budget_usd=args.budget)
    print(f"{outcome.completed} attempt(s) logged, {outcome.skipped} already present, "
          f"{len(outcome.failed)} failed -> {outcome.log_dir}")
    if outcome.failed:
        print("failed attempts are listed in failures.jsonl; re-run to resume", file=sys.stderr)
        return EXIT_PROVIDER
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    prices = load_price_sheet(args.prices)
    report = build_report(args.log, prices, alpha=args.alpha)
    log = Path(args.log)
    out = Path(args.out) if args.out else (log if log.is_dir() else log.parent)
    write_report(report, out)
    sys.stdout.write(render_text(report))
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    matrix = AccuracyMatrix.from_csv(args.matrix)
    if args.drop_constant:
        matrix = matrix.drop_constant_blocks()
    summary = rank_summary(matrix, args.alpha).to_dict()
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
        return EXIT_OK
    fr = summary["friedman"]
    print(f"blocks={summary['n_blocks']} treatments={summary['k_treatments']}")
    print(f"friedman statistic={fr['statistic']:.4f} p={fr['p_value']:.4g} "
          f"(plain {fr['statistic_plain']:.4f}, p={fr['p_value_plain']:.4g})")
    print(f"critical difference (alpha={args.alpha}) = {summary['critical_difference']:.4f}")
    for item in summary["mean_ranks"]:
        print(f"{item['mean_rank']:.4f}\t{item['treatment']}")
    for group in summary["cliques"]:
        print("clique: " + ", ".join(group))
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    loaded = load_experiment(_load_config(args))
    print(json.dumps({"seed": loaded.config.seed, "samples": loaded.samples}, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    loaded = load_experiment(_load_config(args))
    for m in loaded.manifests:
        print(f"{m.variant.value}\t{m.record_count} questions\tsha256={m.sha256}\t{m.source}")
    print(f"templates {loaded.templates.version} sha256={loaded.templates.digest}")
    print(f"{sum(1 for _ in loaded.work())} attempts in the grid")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maps", description="Reflection-strategy benchmark harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute the experiment grid, resuming any existing log")
    p.add_argument("--config", required=True)
    p.add_argument("--live", action="store_true", help="allow paid API calls")
    p.add_argument("--parallel", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--budget", type=_decimal, help="abort if projected worst-case spend exceeds this (USD)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="accuracy, cost and rank tables from a run log")
    p.add_argument("--log", required=True, help="run directory or runs.jsonl")
    p.add_argument("--prices", required=True)
    p.add_argument("--out", help="directory for report files (default: next to the log)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("stats", help="Friedman test and Nemenyi CD for an accuracy CSV")
    p.add_argument("--matrix", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--drop-constant", action="store_true", help="drop blocks where every treatment ties")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sample", help="print the seeded question ids of every run")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("validate", help="check config, prices and corpus digests")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProviderError, AttemptFailed) as exc:
        print(f"provider failure: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (CorpusError, LogError, DegenerateMatrix, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
