"""Workload replay, Q-error reports, and parameter sweeps."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .baseline import Reservoir
from .estimator import Estimator, EstimatorConfig
from .filtering import FilterConfig
from .index import CountedIndex
from .workload import Table, WorkloadOp, _ReplayState, read_workload, read_workload_header
from .zorder import encode

log = logging.getLogger(__name__)

SWEEPABLE = {"budget", "d_max", "strategy", "q_bound", "confidence"}
_ALIASES = {"dmax": "d_max", "qbound": "q_bound", "b": "budget"}


class WorkloadMismatchError(ValueError):
    pass


def qerror(estimate: float, truth: float) -> float:
    """max(E/T, T/E); when either side is zero, max(E, T) + 1."""
    if estimate < 0 or truth < 0:
        raise ValueError(f"negative cardinality (estimate={estimate}, truth={truth})")
    if estimate == 0 or truth == 0:
        return max(estimate, truth) + 1.0
    return max(estimate / truth, truth / estimate)


def nearest_rank(values: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile (no interpolation)."""
    if len(values) == 0:
        return float("nan")
    v = sorted(values)
    k = max(1, int(np.ceil(pct / 100 * len(v))))
    return float(v[k - 1])


@dataclass
class MethodConfig:
    name: str = "ice"
    kind: str = "ice"  # ice | sample | oracle
    fanout: int = 100
    budget: int = 20_000
    d_max: int = 6
    strategy: str = "midpoint"
    q_bound: float = 20.0
    confidence: float = 1 - 1e-7
    hybrid: bool = True
    freeze: bool = False
    sample_fraction: float = 1e-3
    seed: int = 0

    def replace(self, **kw) -> "MethodConfig":
        return dataclasses.replace(self, **kw)

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(budget=self.budget, q_bound=self.q_bound, confidence=self.confidence,
                               hybrid=self.hybrid, seed=self.seed)

    def filter_config(self) -> FilterConfig:
        return FilterConfig(d_max=self.d_max, strategy=self.strategy)


@dataclass
class BenchReport:
    method: str
    params: dict
    n_queries: int
    n_updates: int
    q50: float
    q95: float
    q99: float
    qmax: float
    est_latency_mean: float
    est_latency_p99: float
    update_latency_mean: float
    update_latency_p99: float
    bulk_load_seconds: float
    model_bytes: int
    exact_fraction: float
    batch_size: float
    qerrors: list = field(default_factory=list, repr=False)
    estimates: list = field(default_factory=list, repr=False)
    truths: list = field(default_factory=list, repr=False)

    SUMMARY_FIELDS = ("method", "n_queries", "n_updates", "q50", "q95", "q99", "qmax",
                      "est_latency_mean", "est_latency_p99", "update_latency_mean",
                      "update_latency_p99", "bulk_load_seconds", "model_bytes",
                      "exact_fraction", "batch_size")

    def summary(self) -> dict:
        out = {k: getattr(self, k) for k in self.SUMMARY_FIELDS}
        out["params"] = self.params
        return out

    def deterministic_summary(self) -> dict:
        """Summary without timing fields."""
        out = self.summary()
        for k in ("est_latency_mean", "est_latency_p99", "update_latency_mean",
                  "update_latency_p99", "bulk_load_seconds"):
            out.pop(k)
        return out


def _summarise(cfg: MethodConfig, qerrs, ests, truths, est_lat, upd_lat, n_upd_ops,
               bulk_s, model_bytes, exact) -> BenchReport:
    positive = [q for q, t in zip(qerrs, truths) if t > 0]
    n_q = len(qerrs)
    return BenchReport(
        method=cfg.name,
        params=dataclasses.asdict(cfg),
        n_queries=n_q,
        n_updates=n_upd_ops,
        q50=nearest_rank(positive, 50),
        q95=nearest_rank(positive, 95),
        q99=nearest_rank(positive, 99),
        qmax=max(qerrs) if qerrs else float("nan"),
        est_latency_mean=float(np.mean(est_lat)) if est_lat else 0.0,
        est_latency_p99=float(np.percentile(est_lat, 99)) if est_lat else 0.0,
        update_latency_mean=float(np.mean(upd_lat)) if upd_lat else 0.0,
        update_latency_p99=float(np.percentile(upd_lat, 99)) if upd_lat else 0.0,
        bulk_load_seconds=bulk_s,
        model_bytes=model_bytes,
        exact_fraction=exact / n_q if n_q else 0.0,
        batch_size=n_upd_ops / n_q if n_q else 0.0,
        qerrors=list(qerrs),
        estimates=list(ests),
        truths=list(truths),
    )


def replay(table: Table, stream: Sequence[WorkloadOp], cfg: MethodConfig) -> BenchReport:
    """Replay ``stream`` against one method, timing updates and estimates.

    True cardinalities come from the stream; no oracle work happens inside
    timed sections.
    """
    schema = table.schema
    clock = time.perf_counter
    qerrs, ests, truths, est_lat, upd_lat = [], [], [], [], []
    n_upd_ops = sum(1 for op in stream if op.kind != "query")
    exact = 0

    if cfg.kind == "ice":
        keys = table.keys()
        t0 = clock()
        index = CountedIndex.bulk_load(keys, schema, cfg.fanout)
        bulk_s = clock() - t0
        model_bytes = len(index.to_bytes())
        est = Estimator(index, cfg.filter_config(), cfg.estimator_config())
        rng = np.random.default_rng(cfg.seed)
        for op in stream:
            if op.kind == "query":
                t0 = clock()
                r = est.estimate(op.box, rng)
                est_lat.append(clock() - t0)
                exact += r.used_exact_scan
                value = r.est
            elif cfg.freeze:
                continue
            else:
                # encoding is tuple preparation, kept outside the timed section
                if op.kind == "modify":
                    old, new = encode(op.old, schema), encode(op.new, schema)
                    t0 = clock()
                    index.modify(old, new)
                    upd_lat.append((clock() - t0) / 2)
                else:
                    k = encode(op.values, schema)
                    fn = index.insert if op.kind == "insert" else index.delete
                    t0 = clock()
                    fn(k)
                    upd_lat.append(clock() - t0)
                continue
            ests.append(value)
            truths.append(op.true_card)
            qerrs.append(qerror(value, op.true_card))
    elif cfg.kind == "sample":
        t0 = clock()
        res = Reservoir.build(table.rows, seed=cfg.seed, fraction=cfg.sample_fraction)
        bulk_s = clock() - t0
        model_bytes = res.nbytes()
        for op in stream:
            if op.kind == "query":
                t0 = clock()
                value = res.estimate(op.box)
                est_lat.append(clock() - t0)
                ests.append(value)
                truths.append(op.true_card)
                qerrs.append(qerror(value, op.true_card))
            elif not cfg.freeze:
                t0 = clock()
                res.update(op)
                upd_lat.append((clock() - t0) / (2 if op.kind == "modify" else 1))
    elif cfg.kind == "oracle":
        t0 = clock()
        state = _ReplayState(table.rows)
        bulk_s = clock() - t0
        model_bytes = int(table.rows.nbytes)
        for op in stream:
            if op.kind == "query":
                t0 = clock()
                value = float(state.card(op.box))
                est_lat.append(clock() - t0)
                exact += 1
                ests.append(value)
                truths.append(op.true_card)
                qerrs.append(qerror(value, op.true_card))
            elif not cfg.freeze:
                t0 = clock()
                state.apply(op)
                upd_lat.append((clock() - t0) / (2 if op.kind == "modify" else 1))
    else:
        raise ValueError(f"unknown method kind {cfg.kind!r}")

    report = _summarise(cfg, qerrs, ests, truths, est_lat, upd_lat, n_upd_ops, bulk_s, model_bytes, exact)
    log.info("%s: %d queries, %d updates (batch size %.2f), qmax %.3g", cfg.name, report.n_queries,
             n_upd_ops, report.batch_size, report.qmax)
    return report


def run_benchmark(table: Table, stream: Sequence[WorkloadOp], methods: Sequence[MethodConfig]) -> list[BenchReport]:
    return [replay(table, stream, m) for m in methods]


def load_dataset(path) -> Table:
    from .workload import ingest_csv

    path = str(path)
    if path.endswith(".csv"):
        return ingest_csv(path)
    return Table.load(path)


def load_workload(table: Table, workload_path) -> list[WorkloadOp]:
    """Read a stream after checking it was generated from ``table``'s schema."""
    expected = read_workload_header(workload_path).get("schema_hash")
    if expected is not None and expected != table.schema_hash():
        raise WorkloadMismatchError(
            f"workload was generated for schema {expected}, dataset has {table.schema_hash()}")
    return read_workload(workload_path, table.schema)[1]


def run_benchmark_files(dataset_path, workload_path, methods: Sequence[MethodConfig]) -> list[BenchReport]:
    table = load_dataset(dataset_path)
    return run_benchmark(table, load_workload(table, workload_path), methods)


def sweep(table: Table, stream: Sequence[WorkloadOp], parameter: str, values: Sequence,
          base: MethodConfig) -> list[BenchReport]:
    """One replay per parameter value, every other setting (seeds included) fixed."""
    parameter = _ALIASES.get(parameter, parameter)
    if parameter not in SWEEPABLE:
        raise ValueError(f"cannot sweep {parameter!r}; choose from {sorted(SWEEPABLE)}")
    reports = []
    for v in values:
        cfg = base.replace(name=f"{base.name}[{parameter}={v}]", **{parameter: v})
        reports.append(replay(table, stream, cfg))
    return reports


def reports_to_json(reports: Sequence[BenchReport]) -> str:
    return json.dumps([r.summary() for r in reports], indent=2)


def reports_to_csv(reports: Sequence[BenchReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(list(BenchReport.SUMMARY_FIELDS) + ["params"])
    for r in reports:
        s = r.summary()
        w.writerow([s[k] for k in BenchReport.SUMMARY_FIELDS] + [json.dumps(s["params"])])
    return buf.getvalue()


def write_reports(reports: Sequence[BenchReport], path=None, fmt: str = "json") -> str:
    text = reports_to_json(reports) if fmt == "json" else reports_to_csv(reports)
    if path:
        with open(path, "w") as f:
            f.write(text)
    return text
