"""Command-line entry point: ``rangebound <subcommand> ...``.

Machine output is JSON on stdout.  Diagnostics, and the table printed by
``--pretty``, go to stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from .bounds import BoundStatus, ResultRange, bound_query
from .decomposition import decompose
from .harness import ConfigError, IngestError, load_config, ingest_csv, run_experiment
from .joins import JoinGraph, join_bound
from .pcs import PCSet, check_closure, satisfies_set
from .predicates import Predicate
from .query import ParseError, explain, parse_query
from .schema import Schema, SchemaError

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_NOT_CLOSED = 3
EXIT_INFEASIBLE = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 already; keep the message on stderr only
        raise UsageError(message)


def _clean(obj: Any) -> Any:
    """Make a result JSON-safe: non-finite floats become strings."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _emit(obj: Any) -> None:
    sys.stdout.write(json.dumps(_clean(obj), sort_keys=True) + "\n")


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("RANGEBOUND_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"RANGEBOUND_THREADS must be an integer, got {env!r}") from None
    return 1


def _status_code(status: BoundStatus) -> int:
    if status is BoundStatus.NOT_CLOSED:
        return EXIT_NOT_CLOSED
    if status is BoundStatus.INFEASIBLE_CONSTRAINTS:
        return EXIT_INFEASIBLE
    return EXIT_OK


def _pretty_range(label: str, r: ResultRange) -> None:
    print(f"{label:<12} {r.status.value:<24} [{r.lower}, {r.upper}]", file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def cmd_bound(args) -> int:
    pcs = PCSet.load(args.pcs)
    spec = parse_query(args.query, pcs.schema)
    existing = None
    if args.data:
        existing, skipped = ingest_csv(args.data, pcs.schema, strict=args.strict)
        if skipped:
            print(f"skipped {skipped} malformed rows in {args.data}", file=sys.stderr)
    res = bound_query(spec, pcs, existing, early_stop_depth=args.early_stop, parallelism=_threads(args),
                      order=args.order, greedy=args.method != "milp")
    if isinstance(res, dict):
        _emit({"groups": {k: v.to_json() for k, v in res.items()}})
        if args.pretty:
            for k, v in res.items():
                _pretty_range(str(k), v)
        return max((_status_code(v.status) for v in res.values()), default=EXIT_OK)
    _emit(res.to_json())
    if args.pretty:
        _pretty_range(spec.aggregate, res)
    return _status_code(res.status)


def cmd_decompose(args) -> int:
    pcs = PCSet.load(args.pcs)
    region = None
    if args.query:
        pred = parse_query(args.query, pcs.schema).predicate
        region = None if pred.is_true else pred
    dec = decompose(pcs, region, early_stop_depth=args.early_stop, parallelism=_threads(args), order=args.order)
    _emit(dec.to_json())
    if args.pretty:
        for c in dec.cells:
            print(f"{c.label}  covering={','.join(c.covering)}", file=sys.stderr)
        print(f"{len(dec.cells)} cells, {dec.stats.sat_calls} satisfiability calls", file=sys.stderr)
    return EXIT_OK


def cmd_check(args) -> int:
    pcs = PCSet.load(args.pcs)
    region: Predicate | None = None
    if args.query:
        pred = parse_query(args.query, pcs.schema).predicate
        region = None if pred.is_true else pred
    for pc in pcs:
        pc.check(pcs.schema)
    witness = check_closure(pcs, region)
    out: dict[str, Any] = {"closed": witness is None, "constraints": len(pcs),
                           "disjoint": pcs.pairwise_disjoint}
    if witness is not None:
        out["witness"] = list(witness)
    code = EXIT_OK if witness is None else EXIT_NOT_CLOSED
    if args.data:
        rel, skipped = ingest_csv(args.data, pcs.schema, strict=args.strict)
        out["data_rows"] = len(rel)
        out["data_skipped"] = skipped
        out["data_satisfies"] = satisfies_set(rel, pcs)
    _emit(out)
    if args.pretty:
        print("closed" if witness is None else f"NOT closed, uncovered tuple {witness}", file=sys.stderr)
    return code


def cmd_join_bound(args) -> int:
    graph = JoinGraph.load(args.graph)
    spec = parse_query(args.query, graph.merged_schema())
    res = join_bound(graph, spec, method=args.method, parallelism=_threads(args))
    _emit(res.to_json())
    if args.pretty:
        _pretty_range(spec.aggregate, res)
    return _status_code(res.status)


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.baseline:
        cfg["baselines"] = args.baseline
    if args.seed is not None:
        for section in ("scenario", "queries", "pc", "sampling", "noise"):
            cfg[section]["seed"] = cfg[section]["seed"] + args.seed
    if args.queries is not None:
        cfg["queries"]["count"] = args.queries
    if args.no_timing:
        cfg["record_timing"] = False
    report = run_experiment(cfg, args.csv)
    out = report.to_json()
    if args.output:
        Path(args.output).write_text(json.dumps(_clean(out), indent=2, sort_keys=True) + "\n")
    _emit(out)
    if args.pretty:
        print(f"{'baseline':<10} {'failure':>8} {'overest':>10}", file=sys.stderr)
        for name, m in report.baselines.items():
            over = "-" if m.median_overestimation is None else f"{m.median_overestimation:.3f}"
            print(f"{name:<10} {m.failure_rate:>8.3f} {over:>10}", file=sys.stderr)
    return EXIT_OK


def cmd_parse(args) -> int:
    schema = Schema.from_json(json.loads(Path(args.schema).read_text())) if args.schema else None
    if args.explain:
        sys.stdout.write(explain(args.query, schema))
        return EXIT_OK
    _emit(parse_query(args.query, schema).to_json())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rangebound", description="Deterministic result ranges for aggregates over missing data.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, pcs=True):
        if pcs:
            p.add_argument("--pcs", required=True, help="predicate-constraint set (JSON)")
        p.add_argument("--threads", type=int, help="engine parallelism (default: $RANGEBOUND_THREADS or 1)")
        p.add_argument("--pretty", action="store_true", help="print a human summary to stderr")

    p = sub.add_parser("bound", help="result range of an aggregate query")
    common(p)
    p.add_argument("--query", required=True)
    p.add_argument("--data", help="CSV of rows that are present (added exactly)")
    p.add_argument("--early-stop", type=int, dest="early_stop", metavar="K")
    p.add_argument("--order", choices=("input", "selectivity"), default="input")
    p.add_argument("--method", choices=("auto", "milp"), default="auto",
                   help="auto uses the greedy path for disjoint sets")
    p.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("decompose", help="list the satisfiable cells of a PC set")
    common(p)
    p.add_argument("--query", help="restrict to this query's region")
    p.add_argument("--early-stop", type=int, dest="early_stop", metavar="K")
    p.add_argument("--order", choices=("input", "selectivity"), default="input")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("check", help="validate a PC set and test closure")
    common(p)
    p.add_argument("--query", help="only require closure over this query's region")
    p.add_argument("--data", help="also test whether these rows satisfy the set")
    p.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("join-bound", help="bound an aggregate over a natural join")
    common(p, pcs=False)
    p.add_argument("--graph", required=True, help="join graph (JSON)")
    p.add_argument("--query", required=True)
    p.add_argument("--method", choices=("best", "gwe", "naive"), default="best")
    p.set_defaults(func=cmd_join_bound)

    p = sub.add_parser("experiment", help="run a baseline comparison")
    common(p, pcs=False)
    p.add_argument("--config", required=True)
    p.add_argument("--csv", help="per-query CSV output path")
    p.add_argument("--output", help="metrics JSON output path")
    p.add_argument("--baseline", action="append",
                   choices=("corr-pc", "rand-pc", "us-1p", "us-10p", "us-1n", "us-10n", "st-1n", "st-10n", "hist"))
    p.add_argument("--seed", type=int, help="offset added to every seed in the config")
    p.add_argument("--queries", type=int, help="override the query count")
    p.add_argument("--no-timing", action="store_true", help="write micros as 0 for byte-stable output")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("parse", help="parse a query into its JSON form")
    p.add_argument("--query", required=True)
    p.add_argument("--schema", help="schema JSON for attribute checks")
    p.add_argument("--explain", action="store_true", help="canonical indented JSON, as in golden files")
    p.set_defaults(func=cmd_parse)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as e:
        _report_error(e.to_json())
        return EXIT_USAGE
    except (SchemaError, ConfigError, IngestError, FileNotFoundError, json.JSONDecodeError, KeyError) as e:
        _report_error({"error": type(e).__name__, "message": str(e)})
        return EXIT_USAGE
    except Exception as e:  # pragma: no cover - last resort
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def _report_error(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True), file=sys.stderr)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
