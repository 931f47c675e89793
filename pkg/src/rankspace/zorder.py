"""Z-order (Morton) keys over fixed-width attribute vectors.

Bits are interleaved most-significant round first, attribute 0 first within a
round.  Attributes narrower than the widest one are aligned at their most
significant bit and simply drop out of the later rounds.

Besides encode/decode this module provides the two data-skipping primitives
used by range scans and by recursive filtering: ``bigmin`` (smallest in-box
key strictly above a point) and ``litmax`` (largest in-box key strictly below
it), computed with the classic bit-scanning algorithm in O(n) bit operations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MAX_KEY_BITS = 128


class DomainError(ValueError):
    """A value does not fit the bit width of its attribute."""


class CapacityError(ValueError):
    """The schema needs more key bits than supported."""


class AttributeSchema:
    """Bit widths of the encoded attributes and the derived interleave layout."""

    def __init__(self, betas: Sequence[int], names: Sequence[str] | None = None):
        betas = tuple(int(b) for b in betas)
        if not betas:
            raise ValueError("schema needs at least one attribute")
        for i, b in enumerate(betas):
            if b < 1:
                raise ValueError(f"attribute {i} has bit width {b}; must be >= 1")
        n = sum(betas)
        if n > MAX_KEY_BITS:
            raise CapacityError(f"schema needs {n} key bits; at most {MAX_KEY_BITS} supported")
        self.betas = betas
        self.m = len(betas)
        self.n = n
        self.names = tuple(names) if names is not None else tuple(f"a{i}" for i in range(self.m))
        if len(self.names) != self.m:
            raise ValueError("names and betas differ in length")

        # positions[i][j]: key bit position (0 = LSB) of bit j (0 = MSB) of attribute i
        positions: list[list[int]] = [[] for _ in betas]
        k = 0
        for rnd in range(max(betas)):
            for i, b in enumerate(betas):
                if rnd < b:
                    positions[i].append(n - 1 - k)
                    k += 1
        self.positions = tuple(tuple(p) for p in positions)

        self.masks = tuple(sum(1 << p for p in ps) for ps in self.positions)
        self.full_mask = (1 << n) - 1
        # dim_of[pos]: attribute owning key bit pos; lower[pos]: same-attribute bits below pos
        self.dim_of = [0] * n
        self.lower = [0] * n
        for i, ps in enumerate(self.positions):
            acc = 0
            for p in reversed(ps):
                self.dim_of[p] = i
                self.lower[p] = acc
                acc |= 1 << p
        self.key_dtype = np.dtype(np.uint64) if n <= 64 else np.dtype(object)

    def __eq__(self, other):
        return isinstance(other, AttributeSchema) and self.betas == other.betas and self.names == other.names

    def __hash__(self):
        return hash((self.betas, self.names))

    def __repr__(self):
        return f"AttributeSchema(betas={self.betas}, names={self.names})"

    def domain_size(self, i: int) -> int:
        return 1 << self.betas[i]

    def box(self, low: Sequence[int], high: Sequence[int]) -> "QueryBox":
        return QueryBox(self, tuple(int(v) for v in low), tuple(int(v) for v in high))

    def full_box(self) -> "QueryBox":
        return self.box([0] * self.m, [(1 << b) - 1 for b in self.betas])


def _check(values: Sequence[int], schema: AttributeSchema) -> None:
    if len(values) != schema.m:
        raise ValueError(f"expected {schema.m} values, got {len(values)}")
    for i, (v, b) in enumerate(zip(values, schema.betas)):
        if v < 0 or v >= (1 << b):
            raise DomainError(
                f"attribute {schema.names[i]!r}: value {v} outside [0, {(1 << b) - 1}]"
            )


def encode(values: Sequence[int], schema: AttributeSchema) -> int:
    _check(values, schema)
    z = 0
    for v, b, ps in zip(values, schema.betas, schema.positions):
        for j, p in enumerate(ps):
            if (v >> (b - 1 - j)) & 1:
                z |= 1 << p
    return z


def decode(key: int, schema: AttributeSchema) -> tuple[int, ...]:
    out = []
    for b, ps in zip(schema.betas, schema.positions):
        v = 0
        for p in ps:
            v = (v << 1) | ((key >> p) & 1)
        out.append(v)
    return tuple(out)


def encode_many(rows: np.ndarray, schema: AttributeSchema) -> np.ndarray:
    """Encode an (N, m) integer array; returns uint64 keys, or Python ints for n > 64."""
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.shape[1] != schema.m:
        raise ValueError(f"expected shape (N, {schema.m}), got {rows.shape}")
    if rows.size:
        lo = rows.min(axis=0)
        hi = rows.max(axis=0)
        for i, b in enumerate(schema.betas):
            if lo[i] < 0 or hi[i] >= (1 << b):
                bad = lo[i] if lo[i] < 0 else hi[i]
                raise DomainError(
                    f"attribute {schema.names[i]!r}: value {bad} outside [0, {(1 << b) - 1}]"
                )
    if schema.n <= 64:
        z = np.zeros(rows.shape[0], dtype=np.uint64)
        for i, (b, ps) in enumerate(zip(schema.betas, schema.positions)):
            col = rows[:, i].astype(np.uint64)
            for j, p in enumerate(ps):
                z |= ((col >> np.uint64(b - 1 - j)) & np.uint64(1)) << np.uint64(p)
        return z
    return np.array([encode([int(x) for x in r], schema) for r in rows], dtype=object)


def decode_many(keys: np.ndarray, schema: AttributeSchema) -> np.ndarray:
    keys = np.asarray(keys)
    if schema.n > 64:
        return np.array([decode(int(k), schema) for k in keys], dtype=np.int64).reshape(-1, schema.m)
    keys = keys.astype(np.uint64)
    out = np.zeros((keys.shape[0], schema.m), dtype=np.int64)
    for i, ps in enumerate(schema.positions):
        v = np.zeros(keys.shape[0], dtype=np.uint64)
        for p in ps:
            v = (v << np.uint64(1)) | ((keys >> np.uint64(p)) & np.uint64(1))
        out[:, i] = v.astype(np.int64)
    return out


@dataclass(frozen=True)
class QueryBox:
    """Inclusive per-attribute range predicate in encoded attribute space."""

    schema: AttributeSchema = field(repr=False)
    low: tuple[int, ...]
    high: tuple[int, ...]
    zlow: int = field(init=False, repr=False)
    zhigh: int = field(init=False, repr=False)
    _bounds: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check(self.low, self.schema)
        _check(self.high, self.schema)
        for i, (lo, hi) in enumerate(zip(self.low, self.high)):
            if lo > hi:
                raise ValueError(f"attribute {self.schema.names[i]!r}: low {lo} > high {hi}")
        zlow = encode(self.low, self.schema)
        zhigh = encode(self.high, self.schema)
        object.__setattr__(self, "zlow", zlow)
        object.__setattr__(self, "zhigh", zhigh)
        # masking a key down to one attribute's bits is monotone in that attribute
        bounds = tuple((mk, zlow & mk, zhigh & mk) for mk in self.schema.masks)
        object.__setattr__(self, "_bounds", bounds)

    def contains(self, key: int) -> bool:
        for mk, lo, hi in self._bounds:
            v = key & mk
            if v < lo or v > hi:
                return False
        return True

    __contains__ = contains

    def contains_values(self, values: Sequence[int]) -> bool:
        return all(lo <= v <= hi for v, lo, hi in zip(values, self.low, self.high))

    def contains_many(self, keys: np.ndarray) -> np.ndarray:
        keys = np.asarray(keys)
        ok = np.ones(keys.shape[0], dtype=bool)
        if keys.dtype == object:
            for mk, lo, hi in self._bounds:
                v = keys & mk
                ok = ok & ((v >= lo) & (v <= hi)).astype(bool)
            return ok
        for mk, lo, hi in self._bounds:
            v = keys & np.uint64(mk)
            ok &= (v >= np.uint64(lo)) & (v <= np.uint64(hi))
        return ok

    def volume(self) -> int:
        out = 1
        for lo, hi in zip(self.low, self.high):
            out *= hi - lo + 1
        return out

    def to_dict(self) -> dict:
        return {"low": list(self.low), "high": list(self.high)}


def _bigmin_outside(z: int, box: QueryBox) -> int | None:
    """Smallest in-box key greater than ``z``; ``z`` itself must lie outside the box."""
    s = box.schema
    zmin, zmax = box.zlow, box.zhigh
    lower = s.lower
    best = None
    for pos in range(s.n - 1, -1, -1):
        bit = 1 << pos
        zb = z & bit
        mnb = zmin & bit
        mxb = zmax & bit
        if zb:
            if mnb:
                continue  # 1 1 1
            if not mxb:
                return best  # 1 0 0
            zmin = (zmin | bit) & ~lower[pos]  # 1 0 1
        else:
            if not mxb:
                continue  # 0 0 0
            if mnb:
                return zmin  # 0 1 1
            best = (zmin | bit) & ~lower[pos]  # 0 0 1
            zmax = (zmax & ~bit) | lower[pos]
    return best


def _litmax_outside(z: int, box: QueryBox) -> int | None:
    """Largest in-box key smaller than ``z``; ``z`` itself must lie outside the box."""
    s = box.schema
    zmin, zmax = box.zlow, box.zhigh
    lower = s.lower
    best = None
    for pos in range(s.n - 1, -1, -1):
        bit = 1 << pos
        zb = z & bit
        mnb = zmin & bit
        mxb = zmax & bit
        if zb:
            if mnb:
                continue  # 1 1 1
            if not mxb:
                return zmax  # 1 0 0
            best = (zmax & ~bit) | lower[pos]  # 1 0 1
            zmin = (zmin | bit) & ~lower[pos]
        else:
            if not mxb:
                continue  # 0 0 0
            if mnb:
                return best  # 0 1 1
            zmax = (zmax & ~bit) | lower[pos]  # 0 0 1
    return best


def next_in_box(z: int, box: QueryBox) -> int | None:
    """Smallest in-box key >= z, or None."""
    if z > box.zhigh:
        return None
    if z <= box.zlow:
        return box.zlow
    if box.contains(z):
        return z
    return _bigmin_outside(z, box)


def prev_in_box(z: int, box: QueryBox) -> int | None:
    """Largest in-box key <= z, or None."""
    if z < box.zlow:
        return None
    if z >= box.zhigh:
        return box.zhigh
    if box.contains(z):
        return z
    return _litmax_outside(z, box)


def bigmin(p: int, box: QueryBox) -> int | None:
    """Smallest key strictly greater than ``p`` whose tuple lies in ``box``."""
    if p >= box.schema.full_mask:
        return None
    return next_in_box(p + 1, box)


def litmax(p: int, box: QueryBox) -> int | None:
    """Largest key strictly smaller than ``p`` whose tuple lies in ``box``."""
    if p <= 0:
        return None
    return prev_in_box(p - 1, box)
