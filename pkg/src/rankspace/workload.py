"""Tables, ground truth, and dynamic workload generation.

A ``Table`` holds dictionary-encoded rows: every column is mapped to dense
codes 0..d-1 (numeric columns in value order, categorical columns in
first-seen order) and gets ``max(1, ceil(log2(d)))`` key bits.

Workload streams interleave single-tuple updates with range queries.  Update
tuples are picked adversarially: inserts are weighted toward rows covered by
low-selectivity queries, so a model that stops tracking the data degrades.
Every query in a stream carries the true cardinality at its position.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .zorder import AttributeSchema, QueryBox, encode_many

log = logging.getLogger(__name__)

MIXES = {
    "static": (0, 0, 0),
    "insert-heavy": (2, 1, 1),
    "update-heavy": (1, 1, 2),
}


class IngestError(ValueError):
    pass


# ---------------------------------------------------------------------- table


@dataclass
class ColumnDictionary:
    kind: str  # "numeric" or "categorical"
    values: list
    _codes: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._codes = {v: i for i, v in enumerate(self.values)}

    def __len__(self):
        return len(self.values)

    @property
    def bits(self) -> int:
        return max(1, math.ceil(math.log2(len(self.values)))) if len(self.values) > 1 else 1

    def encode(self, value) -> int:
        code = self._codes.get(value)
        if code is not None:
            return code
        if self.kind != "numeric":
            raise KeyError(f"unknown categorical value {value!r}")
        # out-of-dictionary numeric values snap to the nearest entry
        v = float(value)
        j = bisect_left(self.values, v)
        if j == 0:
            return 0
        if j == len(self.values):
            return len(self.values) - 1
        return j if self.values[j] - v < v - self.values[j - 1] else j - 1

    def decode(self, code: int):
        return self.values[code]


@dataclass
class Table:
    schema: AttributeSchema
    rows: np.ndarray  # (N, m) int64 codes, column-major for fast scans
    dictionaries: list[ColumnDictionary]

    def __post_init__(self):
        self.rows = np.asfortranarray(self.rows, dtype=np.int64)

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])

    @property
    def names(self) -> tuple[str, ...]:
        return self.schema.names

    def domains(self) -> list[int]:
        return [len(d) for d in self.dictionaries]

    def keys(self) -> np.ndarray:
        return encode_many(self.rows, self.schema)

    def schema_hash(self) -> str:
        payload = json.dumps({"betas": self.schema.betas, "names": self.schema.names,
                              "domains": self.domains()})
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    @classmethod
    def from_values(cls, values, names: Sequence[str] | None = None,
                    kinds: Sequence[str] | None = None) -> "Table":
        """Dictionary-encode a 2-D array (or list of rows) of raw values."""
        arr = np.asarray(values, dtype=object if kinds and "categorical" in kinds else None)
        if arr.ndim != 2:
            raise ValueError("values must be 2-D")
        m = arr.shape[1]
        kinds = list(kinds) if kinds else ["numeric"] * m
        names = list(names) if names else [f"c{i}" for i in range(m)]
        dicts, cols = [], []
        for i in range(m):
            col = arr[:, i]
            if kinds[i] == "numeric":
                uniq, codes = np.unique(col.astype(np.float64), return_inverse=True)
                d = ColumnDictionary("numeric", uniq.tolist())
            else:
                seen: dict = {}
                codes = np.array([seen.setdefault(v, len(seen)) for v in col.tolist()], dtype=np.int64)
                d = ColumnDictionary("categorical", list(seen))
            dicts.append(d)
            cols.append(np.asarray(codes, dtype=np.int64).reshape(-1))
        rows = np.stack(cols, axis=1) if cols and arr.shape[0] else np.zeros((0, m), dtype=np.int64)
        if not dicts or any(len(d) == 0 for d in dicts):
            dicts = [d if len(d) else ColumnDictionary(k, [0.0]) for d, k in zip(dicts, kinds)]
        schema = AttributeSchema([d.bits for d in dicts], names)
        return cls(schema, rows, dicts)

    def save(self, path) -> None:
        meta = {
            "names": list(self.schema.names),
            "betas": list(self.schema.betas),
            "dictionaries": [{"kind": d.kind, "values": d.values} for d in self.dictionaries],
        }
        with open(path, "wb") as f:
            np.savez(f, rows=self.rows, meta=np.array(json.dumps(meta)))

    @classmethod
    def load(cls, path) -> "Table":
        with np.load(path, allow_pickle=False) as z:
            rows = z["rows"].astype(np.int64)
            meta = json.loads(str(z["meta"]))
        dicts = [ColumnDictionary(d["kind"], d["values"]) for d in meta["dictionaries"]]
        schema = AttributeSchema(meta["betas"], meta["names"])
        return cls(schema, rows, dicts)


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str = "numeric"


def ingest_csv(path, columns: Sequence[ColumnSpec] | None = None, header: bool = True,
               delimiter: str = ",") -> Table:
    """Read a CSV file into a dictionary-encoded ``Table``.

    Without ``columns`` every column is numeric when all its values parse as
    floats and categorical otherwise.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f, delimiter=delimiter)
        raw = []
        names = None
        for lineno, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if header and names is None:
                names = [c.strip() for c in rec]
                continue
            raw.append((lineno, [c.strip() for c in rec]))
    width = len(columns) if columns else (len(names) if names else (len(raw[0][1]) if raw else 0))
    if width == 0:
        raise IngestError(f"{path}: no columns")
    for lineno, rec in raw:
        if len(rec) != width:
            raise IngestError(f"{path}:{lineno}: expected {width} fields, got {len(rec)}")
    if columns is None:
        names = names or [f"c{i}" for i in range(width)]
        kinds = []
        for i in range(width):
            try:
                for _, rec in raw:
                    float(rec[i])
                kinds.append("numeric")
            except ValueError:
                kinds.append("categorical")
    else:
        names = [c.name for c in columns]
        kinds = [c.kind for c in columns]
    values = []
    for lineno, rec in raw:
        row = []
        for i, (cell, kind) in enumerate(zip(rec, kinds)):
            if kind == "numeric":
                try:
                    row.append(float(cell))
                except ValueError:
                    raise IngestError(f"{path}:{lineno}: column {names[i]!r}: cannot parse {cell!r}") from None
            else:
                row.append(cell)
        values.append(row)
    if not values:
        values = np.zeros((0, width))
    return Table.from_values(np.array(values, dtype=object), names, kinds)


# --------------------------------------------------------------------- oracle


def _rows_of(table_or_rows) -> np.ndarray:
    return table_or_rows.rows if isinstance(table_or_rows, Table) else np.asarray(table_or_rows)


def in_box_mask(rows: np.ndarray, box: QueryBox) -> np.ndarray:
    rows = np.asarray(rows)
    mask = np.ones(rows.shape[0], dtype=bool)
    for i, (lo, hi) in enumerate(zip(box.low, box.high)):
        # column-wise with in-place ands: avoids an (N, m) temporary
        if lo > 0:
            mask &= rows[:, i] >= lo
        if hi < box.schema.domain_size(i) - 1:
            mask &= rows[:, i] <= hi
    return mask


def oracle_cardinality(table, box: QueryBox) -> int:
    """Full-scan ground truth."""
    return int(np.count_nonzero(in_box_mask(_rows_of(table), box)))


# -------------------------------------------------------------------- queries


@dataclass(frozen=True)
class LabeledQuery:
    box: QueryBox
    true_card: int


def _random_box(center: np.ndarray, domains: list[int], constrained: Iterable[int],
                rng: np.random.Generator, schema: AttributeSchema) -> QueryBox:
    low = [0] * len(domains)
    high = [d - 1 for d in domains]
    for i in constrained:
        d = domains[i]
        width = int(min(d, math.floor(d ** rng.uniform(0, 1))))
        lo = int(center[i]) - (width - 1) // 2
        lo = max(0, min(lo, d - width))
        low[i], high[i] = lo, lo + width - 1
    return schema.box(low, high)


def generate_queries(table: Table, count: int, seed: int = 0, mode: str = "random") -> list[LabeledQuery]:
    """Boxes around uniformly drawn rows with log-uniform widths.

    Each query constrains a random non-empty subset of attributes.  ``mode``
    selects the out-of-distribution variants: ``data_drift`` draws centres
    only from the upper half of the table sorted by the first attribute;
    ``query_drift`` always constrains the last attribute and others rarely.
    """
    if table.n_rows == 0:
        raise ValueError("cannot generate queries over an empty table")
    rng = np.random.default_rng(seed)
    m = table.schema.m
    domains = table.domains()
    rows = table.rows
    if mode == "data_drift":
        order = np.argsort(rows[:, 0], kind="stable")
        pool = order[len(order) // 2:]
    elif mode in ("random", "query_drift"):
        pool = None
    else:
        raise ValueError(f"unknown query mode {mode!r}")
    out = []
    for _ in range(count):
        idx = int(rng.integers(table.n_rows)) if pool is None else int(pool[rng.integers(len(pool))])
        if mode == "query_drift":
            attrs = [m - 1] + [i for i in range(m - 1) if rng.uniform() < 0.15]
        else:
            k = int(rng.integers(1, m + 1))
            attrs = rng.choice(m, size=k, replace=False).tolist()
        box = _random_box(rows[idx], domains, attrs, rng, table.schema)
        out.append(LabeledQuery(box, oracle_cardinality(rows, box)))
    return out


# ------------------------------------------------------------------- workload


@dataclass(frozen=True)
class WorkloadSpec:
    mix: tuple[int, int, int] = (0, 0, 0)
    query_count: int = 2048
    update_fraction: float = 0.2
    seed: int = 0
    w_fraction: float = 0.1
    weight_cap: float = 1e5
    query_mode: str = "random"

    def __post_init__(self):
        if tuple(self.mix) not in MIXES.values():
            raise ValueError(f"mix {self.mix} not one of {sorted(MIXES.values())}")
        if not 0 < self.update_fraction < 1:
            raise ValueError("update_fraction must lie in (0, 1)")

    @classmethod
    def named(cls, name: str, **kw) -> "WorkloadSpec":
        return cls(mix=MIXES[name], **kw)

    def op_counts(self, n_rows: int) -> tuple[int, int, int]:
        """(#insert, #delete, #modify); rounding remainder goes to inserts."""
        total_ratio = sum(self.mix)
        if total_ratio == 0:
            return 0, 0, 0
        total = round(self.update_fraction * n_rows)
        n_del = round(total * self.mix[1] / total_ratio)
        n_mod = round(total * self.mix[2] / total_ratio)
        return total - n_del - n_mod, n_del, n_mod


def adversarial_weights(rows: np.ndarray, queries: Sequence[LabeledQuery], n_rows: int,
                        cap: float = 1e5) -> np.ndarray:
    """Per-row weight: sum over covering queries of min(1/selectivity, cap)."""
    w = np.zeros(rows.shape[0], dtype=np.float64)
    for q in queries:
        if q.true_card <= 0:
            continue
        w += in_box_mask(rows, q.box) * min(n_rows / q.true_card, cap)
    return w


def select_adversarial_updates(table: Table, queries: Sequence[LabeledQuery], spec: WorkloadSpec,
                               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Row indices to insert (weighted, with replacement) and delete (uniform, without)."""
    n_ins, n_del, n_mod = spec.op_counts(table.n_rows)
    need_ins, need_del = n_ins + n_mod, n_del + n_mod
    if need_del > table.n_rows:
        raise ValueError("more deletions requested than rows available")
    k = max(1, round(spec.w_fraction * len(queries))) if queries else 0
    picked = rng.choice(len(queries), size=k, replace=False) if k else []
    w = adversarial_weights(table.rows, [queries[i] for i in picked], table.n_rows, spec.weight_cap)
    if w.sum() <= 0:
        log.warning("all adversarial weights are zero; falling back to uniform inserts")
        inserts = rng.integers(0, table.n_rows, size=need_ins)
    else:
        inserts = rng.choice(table.n_rows, size=need_ins, replace=True, p=w / w.sum())
    deletes = rng.choice(table.n_rows, size=need_del, replace=False)
    return np.asarray(inserts, dtype=np.int64), np.asarray(deletes, dtype=np.int64)


@dataclass
class WorkloadOp:
    kind: str  # insert | delete | modify | query
    values: tuple[int, ...] | None = None
    old: tuple[int, ...] | None = None
    new: tuple[int, ...] | None = None
    box: QueryBox | None = None
    true_card: int | None = None

    def to_record(self) -> dict:
        if self.kind in ("insert", "delete"):
            return {"op": self.kind, "values": list(self.values)}
        if self.kind == "modify":
            return {"op": "modify", "old": list(self.old), "new": list(self.new)}
        return {"op": "query", "box": self.box.to_dict(), "true_card": self.true_card}

    @classmethod
    def from_record(cls, rec: dict, schema: AttributeSchema) -> "WorkloadOp":
        op = rec["op"]
        if op in ("insert", "delete"):
            return cls(op, values=tuple(rec["values"]))
        if op == "modify":
            return cls(op, old=tuple(rec["old"]), new=tuple(rec["new"]))
        if op == "query":
            return cls(op, box=schema.box(rec["box"]["low"], rec["box"]["high"]),
                       true_card=rec.get("true_card"))
        raise ValueError(f"unknown op {op!r}")


def build_workload_stream(table: Table, spec: WorkloadSpec) -> list[WorkloadOp]:
    """Queries interleaved with equal-sized update batches, each query labelled
    with its cardinality against the table state at its position."""
    rng = np.random.default_rng(spec.seed)
    queries = generate_queries(table, spec.query_count, seed=int(rng.integers(2**31)), mode=spec.query_mode)
    n_ins, n_del, n_mod = spec.op_counts(table.n_rows)
    rows = table.rows
    updates: list[WorkloadOp] = []
    if n_ins + n_del + n_mod:
        ins, dels = select_adversarial_updates(table, queries, spec, rng)
        updates += [WorkloadOp("insert", values=tuple(rows[i].tolist())) for i in ins[:n_ins]]
        updates += [WorkloadOp("delete", values=tuple(rows[i].tolist())) for i in dels[:n_del]]
        updates += [WorkloadOp("modify", old=tuple(rows[d].tolist()), new=tuple(rows[i].tolist()))
                    for d, i in zip(dels[n_del:], ins[n_ins:])]
        perm = rng.permutation(len(updates))
        updates = [updates[i] for i in perm]

    if not updates:
        return [WorkloadOp("query", box=q.box, true_card=q.true_card) for q in queries]
    state = _ReplayState(rows, extra=n_ins + n_mod)
    batches = np.array_split(np.arange(len(updates)), max(1, len(queries)))
    stream: list[WorkloadOp] = []
    for q, batch in zip(queries, batches):
        for i in batch:
            op = updates[int(i)]
            state.apply(op)
            stream.append(op)
        stream.append(WorkloadOp("query", box=q.box, true_card=state.card(q.box)))
    return stream


class _ReplayState:
    """Reference multiset of rows under updates, with a vectorised oracle."""

    def __init__(self, rows: np.ndarray, extra: int = 0):
        n, m = rows.shape
        self.buf = np.zeros((n + extra, m), dtype=np.int64, order="F")
        self.buf[:n] = rows
        self.alive = np.zeros(n + extra, dtype=bool)
        self.alive[:n] = True
        self.size = n
        self._slots: dict[tuple, list[int]] = {}
        for i, r in enumerate(rows.tolist()):
            self._slots.setdefault(tuple(r), []).append(i)

    def insert(self, values) -> None:
        if self.size == self.buf.shape[0]:
            grow = np.zeros((max(1, self.size), self.buf.shape[1]), dtype=np.int64)
            self.buf = np.asfortranarray(np.concatenate([self.buf, grow]))
            self.alive = np.concatenate([self.alive, np.zeros(max(1, self.size), dtype=bool)])
        self.buf[self.size] = values
        self.alive[self.size] = True
        self._slots.setdefault(tuple(values), []).append(self.size)
        self.size += 1

    def delete(self, values) -> None:
        slots = self._slots.get(tuple(values))
        if not slots:
            raise KeyError(f"row {tuple(values)} not present")
        self.alive[slots.pop()] = False

    def apply(self, op: WorkloadOp) -> None:
        if op.kind == "insert":
            self.insert(op.values)
        elif op.kind == "delete":
            self.delete(op.values)
        elif op.kind == "modify":
            self.delete(op.old)
            self.insert(op.new)

    def card(self, box: QueryBox) -> int:
        live = self.buf[: self.size]
        return int(np.count_nonzero(in_box_mask(live, box) & self.alive[: self.size]))

    def rows(self) -> np.ndarray:
        return self.buf[: self.size][self.alive[: self.size]]


def replay_cardinalities(table: Table, stream: Sequence[WorkloadOp]) -> list[int]:
    """Re-derive every query's cardinality by replaying the stream."""
    state = _ReplayState(table.rows)
    out = []
    for op in stream:
        if op.kind == "query":
            out.append(state.card(op.box))
        else:
            state.apply(op)
    return out


def write_workload(path, stream: Sequence[WorkloadOp], table: Table, spec: WorkloadSpec | None = None) -> None:
    """JSON lines: a header record, then one record per operation in execution order."""
    header = {"op": "header", "schema_hash": table.schema_hash(), "betas": list(table.schema.betas),
              "names": list(table.schema.names), "n_rows": table.n_rows}
    if spec is not None:
        header.update(mix=list(spec.mix), query_count=spec.query_count,
                      update_fraction=spec.update_fraction, seed=spec.seed, query_mode=spec.query_mode)
    with open(path, "w") as f:
        f.write(json.dumps(header) + "\n")
        for op in stream:
            f.write(json.dumps(op.to_record()) + "\n")


def read_workload_header(path) -> dict:
    """The header record, or ``{}`` for headerless files."""
    with open(path) as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                return rec if rec.get("op") == "header" else {}
    return {}


def read_workload(path, schema: AttributeSchema) -> tuple[dict, list[WorkloadOp]]:
    header: dict = {}
    ops = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("op") == "header":
                header = rec
                continue
            try:
                ops.append(WorkloadOp.from_record(rec, schema))
            except (KeyError, ValueError) as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
    return header, ops
