"""``vocab-squeeze`` command line.

Subcommands
-----------
compress      compress every feature of a count table to a total budget
evaluate      recompute the MI report of an existing mapping
compare       sweep methods and budgets, write a CSV and a loss-curve figure
gen-synthetic write a Zipfian synthetic count table
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .allocator import BudgetError
from .ingest import CountValidationError, ParseError, read_counts, write_counts
from .pipeline import (
    ALLOCATIONS,
    METHODS,
    ConfigError,
    RunConfig,
    compare,
    compress,
    evaluate_mapping,
    load_features,
    parse_log_base,
    read_mapping,
    write_compare_csv,
    write_mapping,
    write_report,
)
from .plotting import figure_path, plot_feature_report, plot_loss_curves
from .synthetic import SyntheticConfig, generate_table

logger = logging.getLogger("vocab_squeeze")


class UsageError(Exception):
    pass


def _comma_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in _comma_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="count table: feature<TAB>value<TAB>count_c0<TAB>count_c1")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log-base", default="2", choices=["2", "e"])
    p.add_argument("--min-count", type=int, default=1, help="drop values seen fewer times (mapped to OOV)")
    p.add_argument("--shards", type=int, default=None, help="shard count for submodular-distributed (default ceil(eps k))")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vocab-squeeze",
        description="Compress categorical feature vocabularies while keeping mutual information with a binary label.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress all features to a total vocabulary budget")
    _add_common(p)
    p.add_argument("--output", required=True, help="mapping TSV: feature<TAB>value<TAB>cluster_id")
    p.add_argument("--report", required=True, help="JSON report path")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--budget", type=int, required=True, help="total number of clusters over all features")
    p.add_argument("--allocation", choices=ALLOCATIONS, default=None)
    p.add_argument("--trace", default=None, help="JSON-lines round trace (submodular-distributed)")
    p.add_argument("--record-time", action="store_true", help="add wall_time_ms to the report")
    p.add_argument("--no-figure", action="store_true", help="skip the PNG next to the report")

    p = sub.add_parser("evaluate", help="recompute MI figures for an existing mapping")
    p.add_argument("--input", required=True)
    p.add_argument("--mapping", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--log-base", default="2", choices=["2", "e"])

    p = sub.add_parser("compare", help="sweep methods and budgets")
    _add_common(p)
    p.add_argument("--report", required=True, help="CSV output path")
    p.add_argument("--methods", required=True, type=_comma_list)
    p.add_argument("--budgets", required=True, type=_int_list)
    p.add_argument("--allocation", type=_comma_list, default=None, help="comma list; default per method")
    p.add_argument("--no-figure", action="store_true")

    p = sub.add_parser("gen-synthetic", help="write a Zipfian synthetic count table")
    p.add_argument("--n", type=int, required=True, help="total vocabulary size")
    p.add_argument("--num-features", type=int, default=1)
    p.add_argument("--zipf-exponent", type=float, default=1.1)
    p.add_argument("--samples", type=int, default=None, help="instances per feature (default 10 n)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    return parser


def _base_config(args, method: str = "submodular", budget: int = 1, allocation: Optional[str] = None) -> RunConfig:
    return RunConfig(
        method=method,
        budget=budget,
        allocation=allocation,
        epsilon=args.epsilon,
        seed=args.seed,
        log_base=parse_log_base(args.log_base),
        min_count=args.min_count,
        shards=args.shards,
    )


def cmd_compress(args) -> int:
    cfg = _base_config(args, args.method, args.budget, args.allocation)
    loaded = load_features(read_counts(args.input), cfg.min_count)
    trace = open(args.trace, "w", encoding="utf-8", newline="\n") if args.trace else None
    try:
        result = compress(loaded, cfg, trace=trace)
    finally:
        if trace is not None:
            trace.close()
    write_mapping(result, args.output)
    report = result.report(record_time=args.record_time)
    write_report(report, args.report)
    if not args.no_figure:
        plot_feature_report(report, figure_path(args.report))
    loss = report["avg_mi_loss"]
    logger.info("%s: vocabulary %d, average MI loss %s", cfg.method, result.vocab_size, loss)
    return 0


def cmd_evaluate(args) -> int:
    if args.min_count < 0:
        raise ConfigError("min_count must be non-negative")
    report = evaluate_mapping(
        read_counts(args.input), read_mapping(args.mapping), args.min_count, parse_log_base(args.log_base)
    )
    write_report(report, args.report)
    return 0


def cmd_compare(args) -> int:
    if not args.methods:
        raise UsageError("--methods needs at least one method")
    if not args.budgets:
        raise UsageError("--budgets needs at least one budget")
    bad = [m for m in args.methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown method(s) {', '.join(bad)}; choose from {', '.join(METHODS)}")
    if args.allocation:
        bad = [a for a in args.allocation if a not in ALLOCATIONS]
        if bad:
            raise UsageError(f"unknown allocation(s) {', '.join(bad)}")
    base = _base_config(args)
    loaded = load_features(read_counts(args.input), base.min_count)
    rows = compare(loaded, args.methods, args.budgets, args.allocation, base)
    write_compare_csv(rows, args.report)
    if not args.no_figure:
        plot_loss_curves(rows, figure_path(args.report))
    failed = sum(r["status"] != "ok" for r in rows)
    if failed:
        logger.warning("%d of %d cells failed; see the status column", failed, len(rows))
    return 0


def cmd_gen_synthetic(args) -> int:
    cfg = SyntheticConfig(
        n=args.n,
        num_features=args.num_features,
        zipf_exponent=args.zipf_exponent,
        samples=args.samples,
        seed=args.seed,
    )
    write_counts(generate_table(cfg), args.output)
    return 0


COMMANDS = {
    "compress": cmd_compress,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "gen-synthetic": cmd_gen_synthetic,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ConfigError, BudgetError, ParseError, CountValidationError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"vocab-squeeze: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
