"""Command-line front end.

Every global flag may also be set through an environment variable named
``RANKSPACE_<FLAG>`` (upper case, dashes as underscores), e.g.
``RANKSPACE_BUDGET=5000``.  Explicit command-line values win.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import datasets
from .bench import (SWEEPABLE, MethodConfig, WorkloadMismatchError, load_dataset, load_workload,
                    run_benchmark, sweep, write_reports)
from .estimator import Estimator
from .filtering import SplitStrategy
from .index import CountedIndex
from .workload import (MIXES, ColumnSpec, Table, WorkloadSpec, build_workload_stream, ingest_csv,
                       oracle_cardinality, write_workload)

ENV_PREFIX = "RANKSPACE_"

GLOBAL_FLAGS = {
    # flag: (type, default, help)
    "seed": (int, 0, "random seed"),
    "fanout": (int, 100, "index node fanout"),
    "budget": (int, 20_000, "sample budget b"),
    "dmax": (int, 6, "maximum recursive filtering depth"),
    "qbound": (float, 20.0, "maximum tolerable Q-error q_b"),
    "confidence": (float, 1 - 1e-7, "confidence c of the hybrid bound"),
    "strategy": (str, "midpoint", "separation strategy: midpoint or opt1"),
    "hybrid": (str, "on", "exact fallback on|off"),
    "freeze": (bool, False, "ignore updates during replay"),
    "out": (str, None, "output path (stdout when omitted)"),
    "format": (str, "json", "report format json|csv"),
}


class CliError(Exception):
    pass


def _env_default(name: str, typ, default):
    raw = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if raw is None:
        return default
    if typ is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    try:
        return typ(raw)
    except ValueError:
        raise CliError(f"bad value {raw!r} for {ENV_PREFIX}{name.upper()}") from None


def _global_parent(suppress: bool = False) -> argparse.ArgumentParser:
    # the subcommand copy suppresses defaults so flags given before the
    # subcommand are not overwritten
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    for name, (typ, default, help_) in GLOBAL_FLAGS.items():
        dflt = argparse.SUPPRESS if suppress else _env_default(name, typ, default)
        if typ is bool:
            g.add_argument(f"--{name}", action="store_true", default=dflt, help=help_)
        elif name == "hybrid":
            g.add_argument("--hybrid", choices=("on", "off"), default=dflt, help=help_)
        elif name == "format":
            g.add_argument("--format", choices=("json", "csv"), default=dflt, help=help_)
        else:
            g.add_argument(f"--{name}", type=typ, default=dflt, help=help_)
    g.add_argument("-v", "--verbose", action="store_true",
                   default=argparse.SUPPRESS if suppress else False, help="log progress to stderr")
    return p


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankspace", parents=[_global_parent()],
                                     description="Index-based cardinality estimation in rank space.")
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _global_parent(suppress=True)

    p = sub.add_parser("ingest", parents=[parent], help="encode a CSV file (or a synthetic dataset) into a table")
    p.add_argument("source", help="CSV path, or synthetic:<kind>:<rows> with kind in "
                                  + ", ".join(datasets.GENERATORS))
    p.add_argument("--columns", help="name:kind,... (kind numeric|categorical); inferred when omitted")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--delimiter", default=",")

    p = sub.add_parser("gen-workload", parents=[parent], help="generate a labelled workload stream")
    p.add_argument("dataset")
    p.add_argument("--mix", choices=sorted(MIXES), default="static")
    p.add_argument("--queries", type=int, default=2048)
    p.add_argument("--update-fraction", type=float, default=0.2)
    p.add_argument("--mode", choices=("random", "data_drift", "query_drift"), default="random")

    p = sub.add_parser("build", parents=[parent], help="bulk-load an index snapshot from a table")
    p.add_argument("dataset")

    p = sub.add_parser("bench", parents=[parent], help="replay a workload against one or more methods")
    p.add_argument("dataset")
    p.add_argument("workload")
    p.add_argument("--methods", default="ice,sample", help="comma list from ice, sample, oracle")
    p.add_argument("--sample-fraction", type=float, default=1e-3)

    p = sub.add_parser("sweep", parents=[parent], help="replay once per parameter value")
    p.add_argument("dataset")
    p.add_argument("workload")
    p.add_argument("--param", required=True, help="one of " + ", ".join(sorted(SWEEPABLE | {"dmax", "qbound"})))
    p.add_argument("--values", required=True, help="comma-separated values")

    for name, help_ in (("estimate", "estimate one box against an index snapshot"),
                        ("oracle", "exact cardinality of one box over a table")):
        p = sub.add_parser(name, parents=[parent], help=help_)
        p.add_argument("source", help="index snapshot" if name == "estimate" else "table or CSV")
        p.add_argument("--low", type=_ints, required=True, help="per-attribute lower codes")
        p.add_argument("--high", type=_ints, required=True, help="per-attribute upper codes")
    return parser


def _method(args, kind: str = "ice", **kw) -> MethodConfig:
    try:
        strategy = SplitStrategy.parse(args.strategy).value
    except ValueError as e:
        raise CliError(str(e)) from None
    return MethodConfig(name=kw.pop("name", kind), kind=kind, fanout=args.fanout, budget=args.budget,
                        d_max=args.dmax, strategy=strategy, q_bound=args.qbound,
                        confidence=args.confidence, hybrid=args.hybrid == "on", freeze=args.freeze,
                        seed=args.seed, **kw)


def _emit(payload, args) -> None:
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text.rstrip("\n") + "\n")


def _require_out(args, what: str) -> str:
    if not args.out:
        raise CliError(f"{what} needs --out <path>")
    return args.out


def cmd_ingest(args) -> None:
    out = _require_out(args, "ingest")
    if args.source.startswith("synthetic:"):
        try:
            _, kind, n = args.source.split(":")
            values = datasets.GENERATORS[kind](int(n), seed=args.seed)
        except (ValueError, KeyError):
            raise CliError(f"bad synthetic source {args.source!r}") from None
        table = Table.from_values(values)
    else:
        cols = None
        if args.columns:
            cols = []
            for item in args.columns.split(","):
                name, _, kind = item.partition(":")
                cols.append(ColumnSpec(name, kind or "numeric"))
        table = ingest_csv(args.source, cols, header=not args.no_header, delimiter=args.delimiter)
    table.save(out)
    print(json.dumps({"rows": table.n_rows, "betas": list(table.schema.betas),
                      "names": list(table.names), "schema_hash": table.schema_hash(), "out": out}))


def cmd_gen_workload(args) -> None:
    out = _require_out(args, "gen-workload")
    table = load_dataset(args.dataset)
    spec = WorkloadSpec.named(args.mix, query_count=args.queries, update_fraction=args.update_fraction,
                              seed=args.seed, query_mode=args.mode)
    stream = build_workload_stream(table, spec)
    write_workload(out, stream, table, spec)
    n_upd = sum(op.kind != "query" for op in stream)
    print(json.dumps({"queries": args.queries, "updates": n_upd,
                      "batch_size": n_upd / max(1, args.queries), "out": out}))


def cmd_build(args) -> None:
    out = _require_out(args, "build")
    table = load_dataset(args.dataset)
    t0 = time.perf_counter()
    index = CountedIndex.bulk_load(table.keys(), table.schema, args.fanout)
    elapsed = time.perf_counter() - t0
    size = index.save(out)
    print(json.dumps({"rows": len(index), "depth": index.depth, "bytes": size,
                      "bulk_load_seconds": elapsed, "out": out}))


def cmd_bench(args) -> None:
    table = load_dataset(args.dataset)
    stream = load_workload(table, args.workload)
    kinds = [k.strip() for k in args.methods.split(",") if k.strip()]
    for k in kinds:
        if k not in ("ice", "sample", "oracle"):
            raise CliError(f"unknown method {k!r}")
    methods = [_method(args, k, sample_fraction=args.sample_fraction) for k in kinds]
    reports = run_benchmark(table, stream, methods)
    _emit(write_reports(reports, None, args.format), args)


def _coerce(param: str, raw: str):
    if param in ("budget", "dmax", "d_max"):
        return int(float(raw))
    if param == "strategy":
        return SplitStrategy.parse(raw).value
    return float(raw)


def cmd_sweep(args) -> None:
    table = load_dataset(args.dataset)
    stream = load_workload(table, args.workload)
    try:
        values = [_coerce(args.param, v) for v in args.values.split(",")]
    except ValueError as e:
        raise CliError(f"bad sweep values: {e}") from None
    reports = sweep(table, stream, args.param, values, _method(args))
    _emit(write_reports(reports, None, args.format), args)


def cmd_estimate(args) -> None:
    index = CountedIndex.load(args.source)
    box = index.schema.box(args.low, args.high)
    method = _method(args)
    est = Estimator(index, method.filter_config(), method.estimator_config())
    res = est.estimate(box, np.random.default_rng(args.seed))
    _emit(res.to_dict(), args)


def cmd_oracle(args) -> None:
    table = load_dataset(args.source)
    box = table.schema.box(args.low, args.high)
    _emit({"card": oracle_cardinality(table, box)}, args)


COMMANDS = {
    "ingest": cmd_ingest, "gen-workload": cmd_gen_workload, "build": cmd_build, "bench": cmd_bench,
    "sweep": cmd_sweep, "estimate": cmd_estimate, "oracle": cmd_oracle,
}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        parser = build_parser()
    except CliError as e:
        return _fail("config", str(e), 2)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse already printed usage; add the machine-readable line
        if e.code:
            return _fail("usage", "invalid command line", 2)
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except WorkloadMismatchError as e:
        return _fail("schema_mismatch", str(e), 3)
    except (CliError, ValueError, KeyError, IndexError) as e:
        return _fail(type(e).__name__, str(e), 1)
    except OSError as e:
        return _fail("io", str(e), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
