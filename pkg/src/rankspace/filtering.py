"""Recursive key-space filtering of a query box.

A box maps to the Z-interval [zlow, zhigh], which usually contains long runs
of keys outside the box.  ``recursive_filter`` splits that interval at a
separation point and, whenever the point falls outside the box, trims each
half back to the box with litmax/bigmin.  After ``d_max`` levels at most
``2**d_max`` disjoint sub-intervals remain, every box key lies in exactly one
of them, and the total rank mass they cover shrinks toward the box's true
cardinality.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

from .zorder import QueryBox, bigmin, decode, encode, litmax


class SplitStrategy(str, enum.Enum):
    MIDPOINT = "midpoint"
    OPTIMAL_1_SPLIT = "opt1"

    @classmethod
    def parse(cls, value: "str | SplitStrategy") -> "SplitStrategy":
        if isinstance(value, cls):
            return value
        v = str(value).lower().replace("-", "_")
        aliases = {"midpoint": cls.MIDPOINT, "middle": cls.MIDPOINT, "mid": cls.MIDPOINT,
                   "opt1": cls.OPTIMAL_1_SPLIT, "optimal_1_split": cls.OPTIMAL_1_SPLIT,
                   "opt_1_split": cls.OPTIMAL_1_SPLIT}
        try:
            return aliases[v]
        except KeyError:
            raise ValueError(f"unknown split strategy {value!r}") from None


@dataclass(frozen=True)
class FilterConfig:
    d_max: int = 6
    strategy: SplitStrategy = SplitStrategy.MIDPOINT

    def __post_init__(self):
        if self.d_max < 0:
            raise ValueError("d_max must be >= 0")
        object.__setattr__(self, "strategy", SplitStrategy.parse(self.strategy))


class ZInterval(NamedTuple):
    low: int
    up: int


def _gap(p: int, q: ZInterval, box: QueryBox) -> int:
    hi = bigmin(p, box)
    lo = litmax(p, box)
    hi = q.up + 1 if hi is None or hi > q.up else hi
    lo = q.low - 1 if lo is None or lo < q.low else lo
    return hi - lo


def find_separation_point(q: ZInterval, box: QueryBox,
                          strategy: SplitStrategy = SplitStrategy.MIDPOINT) -> int:
    if q.low >= q.up:
        raise ValueError(f"cannot split degenerate interval {tuple(q)}")
    mid = (q.low + q.up) // 2
    if strategy is SplitStrategy.MIDPOINT:
        return mid
    # one candidate per attribute: the midpoint key with that attribute moved
    # to the middle of its box range
    schema = box.schema
    base = list(decode(mid, schema))
    best, best_gap = None, -1
    for i in range(schema.m):
        vals = base.copy()
        vals[i] = (box.low[i] + box.high[i]) // 2
        p = encode(vals, schema)
        if not q.low <= p <= q.up:
            continue
        g = _gap(p, q, box)
        if g > best_gap or (g == best_gap and p < best):
            best, best_gap = p, g
    return mid if best is None else best


def recursive_filter(box: QueryBox, config: FilterConfig = FilterConfig()) -> list[ZInterval]:
    """Ordered, disjoint Z-intervals whose union holds every key of ``box``.

    Each produced interval starts and ends on an in-box key.
    """
    out: list[ZInterval] = []
    d_max = config.d_max
    strategy = config.strategy

    def rec(q: ZInterval, d: int) -> None:
        if d >= d_max or q.low == q.up:
            out.append(q)
            return
        p = find_separation_point(q, box, strategy)
        if box.contains(p):
            left_up, right_low = p, bigmin(p, box)
        else:
            left_up, right_low = litmax(p, box), bigmin(p, box)
        # litmax(p) <= p < bigmin(p), so the two halves never overlap
        if left_up is not None and left_up >= q.low:
            rec(ZInterval(q.low, left_up), d + 1)
        if right_low is not None and right_low <= q.up:
            rec(ZInterval(right_low, q.up), d + 1)

    rec(ZInterval(box.zlow, box.zhigh), 0)
    return out


def filter_efficiency(box: QueryBox, intervals: list[ZInterval], index) -> float | None:
    """card(box) / rank mass covered by ``intervals``; None for an empty box."""
    card = index.range_query_exact(box).card
    if card == 0:
        return None
    r_sum = sum(index.count_between(q.low, q.up) for q in intervals)
    assert r_sum > 0, "filtered intervals lost box tuples"
    return card / r_sum
