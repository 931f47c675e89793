"""Uniform in-memory sample ("Sample") baseline.

Keeps ``ceil(N * fraction)`` rows (at least one) of the table and scales the
fraction of sampled rows inside a box up to the table size.  Inserts follow
reservoir maintenance; a deleted row that happens to be sampled is dropped
from the reservoir without refill, since refilling would need table access.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from .zorder import QueryBox


def reservoir_budget(n_rows: int, fraction: float = 1e-3) -> int:
    return max(1, math.ceil(n_rows * fraction))


class Reservoir:
    def __init__(self, rows: np.ndarray, n_rows: int, fraction: float = 1e-3,
                 rng: np.random.Generator | None = None):
        self._rows: list[tuple[int, ...]] = [tuple(r) for r in np.asarray(rows).tolist()]
        self.n_rows = n_rows
        self.fraction = fraction
        self.rng = rng if rng is not None else np.random.default_rng()
        self._arr = None

    @classmethod
    def build(cls, table_rows: np.ndarray, seed: int = 0, fraction: float = 1e-3) -> "Reservoir":
        rng = np.random.default_rng(seed)
        rows = np.asarray(table_rows)
        n = rows.shape[0]
        k = min(reservoir_budget(n, fraction), n)
        pick = rng.choice(n, size=k, replace=False) if k else np.zeros(0, dtype=np.int64)
        return cls(rows[np.sort(pick)], n, fraction, rng)

    @property
    def budget(self) -> int:
        return reservoir_budget(self.n_rows, self.fraction)

    def __len__(self):
        return len(self._rows)

    @property
    def rows(self) -> np.ndarray:
        if self._arr is None:
            self._arr = np.array(self._rows, dtype=np.int64).reshape(len(self._rows), -1)
        return self._arr

    def insert(self, values) -> None:
        self.n_rows += 1
        row = tuple(int(v) for v in values)
        target = min(self.budget, self.n_rows)
        if len(self._rows) < target:
            self._rows.append(row)
            self._arr = None
        elif self._rows and self.rng.random() < len(self._rows) / self.n_rows:
            self._rows[int(self.rng.integers(len(self._rows)))] = row
            self._arr = None

    def delete(self, values) -> None:
        self.n_rows -= 1
        row = tuple(int(v) for v in values)
        try:
            self._rows.remove(row)
            self._arr = None
        except ValueError:
            pass
        # a shrinking table may leave the reservoir above budget
        while len(self._rows) > min(self.budget, self.n_rows):
            self._rows.pop(int(self.rng.integers(len(self._rows))))
            self._arr = None

    def update(self, op) -> None:
        if op.kind == "insert":
            self.insert(op.values)
        elif op.kind == "delete":
            self.delete(op.values)
        elif op.kind == "modify":
            self.delete(op.old)
            self.insert(op.new)

    def estimate(self, box: QueryBox) -> float:
        if not self._rows:
            warnings.warn("empty reservoir; estimating 0", RuntimeWarning, stacklevel=2)
            return 0.0
        rows = self.rows
        hits = np.count_nonzero(((rows >= np.asarray(box.low)) & (rows <= np.asarray(box.high))).all(axis=1))
        return hits / len(self._rows) * self.n_rows

    def nbytes(self) -> int:
        return int(self.rows.nbytes)
