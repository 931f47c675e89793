"""Counted B+-tree over Z-order keys.

Every leaf slot stores a distinct key together with its multiplicity, and
every internal node caches the number of tuples below each child.  Those
counters turn the tree into an exact, always-fresh bijection between keys and
global tuple ranks:

* ``key2rank(k)``   number of stored copies with key <= k
* ``rank2key(r)``   key of the r-th copy (1-indexed) in key order

Both run in O(depth).  Inserts and deletes touch one root-to-leaf path plus at
most one sibling per level while rebalancing.

The index is single-writer / multi-reader: reads may run concurrently with one
another, mutations need exclusive access.
"""
from __future__ import annotations

import struct
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .zorder import AttributeSchema, QueryBox, next_in_box


class KeyNotFoundError(KeyError):
    pass


class _Leaf:
    __slots__ = ("keys", "freqs", "count", "next", "prev", "_cum", "_karr")

    def __init__(self, keys=None, freqs=None):
        self.keys: list[int] = keys if keys is not None else []
        self.freqs: list[int] = freqs if freqs is not None else []
        self.count = sum(self.freqs)
        self.next: _Leaf | None = None
        self.prev: _Leaf | None = None
        self._cum = None
        self._karr = None

    def cum(self) -> np.ndarray:
        if self._cum is None:
            self._cum = np.cumsum(np.array(self.freqs, dtype=np.int64))
        return self._cum


class _Inner:
    __slots__ = ("keys", "children", "counts", "count", "_cum")

    def __init__(self, keys, children, counts):
        # keys[i] is a lower bound for child i and exceeds every key of child i-1
        self.keys: list[int] = keys
        self.children: list = children
        self.counts: list[int] = counts
        self.count = sum(counts)
        self._cum = None

    def cum(self) -> np.ndarray:
        if self._cum is None:
            self._cum = np.cumsum(np.array(self.counts, dtype=np.int64))
        return self._cum


@dataclass(frozen=True)
class RangeResult:
    card: int
    scanned: int


_MAGIC = b"RSIX"
_VERSION = 1


class CountedIndex:
    """Order-statistic B+-tree keyed by Z-order keys, with per-key frequencies."""

    def __init__(self, schema: AttributeSchema, fanout: int = 100):
        if fanout < 4:
            raise ValueError(f"fanout must be >= 4, got {fanout}")
        self.schema = schema
        self.fanout = fanout
        self.min_fill = (fanout + 1) // 2
        self.root: _Leaf | _Inner = _Leaf()
        self.last_touched = 0

    # ------------------------------------------------------------------ build

    @classmethod
    def bulk_load(cls, keys: Iterable[int] | np.ndarray, schema: AttributeSchema,
                  fanout: int = 100) -> "CountedIndex":
        """Build bottom-up from an unsorted multiset of keys."""
        idx = cls(schema, fanout)
        if isinstance(keys, np.ndarray) and keys.dtype != object:
            uniq, counts = np.unique(keys, return_counts=True)
            ukeys = [int(k) for k in uniq.tolist()]
            ufreq = counts.tolist()
        else:
            ukeys, ufreq = [], []
            for k in sorted(int(k) for k in keys):
                if ukeys and ukeys[-1] == k:
                    ufreq[-1] += 1
                else:
                    ukeys.append(k)
                    ufreq.append(1)
        if not ukeys:
            return idx

        leaves = [_Leaf(ukeys[a:b], ufreq[a:b]) for a, b in idx._chunks(len(ukeys))]
        for a, b in zip(leaves, leaves[1:]):
            a.next = b
            b.prev = a
        level: list = leaves
        while len(level) > 1:
            level = [
                _Inner([nd.keys[0] for nd in level[a:b]], level[a:b], [nd.count for nd in level[a:b]])
                for a, b in idx._chunks(len(level))
            ]
        idx.root = level[0]
        return idx

    def _chunks(self, total: int) -> list[tuple[int, int]]:
        bounds = [(a, min(a + self.fanout, total)) for a in range(0, total, self.fanout)]
        if len(bounds) > 1:
            a, b = bounds[-1]
            if b - a < self.min_fill:
                # short tail borrows from its left neighbour
                start = bounds[-2][0]
                mid = (start + b) // 2
                bounds[-2:] = [(start, mid), (mid, b)]
        return bounds

    # ------------------------------------------------------------------ basic

    def __len__(self) -> int:
        return self.root.count

    def total_count(self) -> int:
        return self.root.count

    @property
    def depth(self) -> int:
        d, node = 1, self.root
        while type(node) is _Inner:
            node = node.children[0]
            d += 1
        return d

    def _first_leaf(self) -> _Leaf:
        node = self.root
        while type(node) is _Inner:
            node = node.children[0]
        return node

    def items(self) -> Iterator[tuple[int, int]]:
        """(key, frequency) pairs in key order."""
        leaf = self._first_leaf()
        while leaf is not None:
            yield from zip(leaf.keys, leaf.freqs)
            leaf = leaf.next

    def distinct_count(self) -> int:
        return sum(1 for _ in self.items())

    def frequency(self, key: int) -> int:
        leaf = self._find_leaf(key)
        j = bisect_left(leaf.keys, key)
        if j < len(leaf.keys) and leaf.keys[j] == key:
            return leaf.freqs[j]
        return 0

    def _find_leaf(self, key: int) -> _Leaf:
        node = self.root
        while type(node) is _Inner:
            i = bisect_right(node.keys, key) - 1
            node = node.children[i if i > 0 else 0]
        return node

    # ------------------------------------------------------------ maintenance

    def insert(self, key: int) -> None:
        key = int(key)
        if key < 0 or key > self.schema.full_mask:
            raise ValueError(f"key {key} outside the {self.schema.n}-bit key space")
        path = []
        node = self.root
        while type(node) is _Inner:
            i = bisect_right(node.keys, key) - 1
            if i < 0:
                i = 0
                node.keys[0] = key
            node.counts[i] += 1
            node.count += 1
            node._cum = None
            path.append((node, i))
            node = node.children[i]
        leaf = node
        j = bisect_left(leaf.keys, key)
        if j < len(leaf.keys) and leaf.keys[j] == key:
            leaf.freqs[j] += 1
        else:
            leaf.keys.insert(j, key)
            leaf.freqs.insert(j, 1)
            leaf._karr = None
        leaf.count += 1
        leaf._cum = None
        self.last_touched = len(path) + 1
        if len(leaf.keys) > self.fanout:
            self._split(leaf, path)

    def _split(self, node, path) -> None:
        while len(node.keys) > self.fanout:
            mid = len(node.keys) // 2
            if type(node) is _Leaf:
                right = _Leaf(node.keys[mid:], node.freqs[mid:])
                del node.keys[mid:]
                del node.freqs[mid:]
                node._karr = None
                right.next = node.next
                if right.next is not None:
                    right.next.prev = right
                right.prev = node
                node.next = right
            else:
                right = _Inner(node.keys[mid:], node.children[mid:], node.counts[mid:])
                del node.keys[mid:]
                del node.children[mid:]
                del node.counts[mid:]
            node.count -= right.count
            node._cum = None
            self.last_touched += 1
            if not path:
                self.root = _Inner([node.keys[0], right.keys[0]], [node, right], [node.count, right.count])
                self.last_touched += 1
                return
            parent, i = path.pop()
            parent.keys.insert(i + 1, right.keys[0])
            parent.children.insert(i + 1, right)
            parent.counts[i] = node.count
            parent.counts.insert(i + 1, right.count)
            parent._cum = None
            node = parent

    def delete(self, key: int) -> None:
        key = int(key)
        path = []
        node = self.root
        while type(node) is _Inner:
            i = bisect_right(node.keys, key) - 1
            if i < 0:
                raise KeyNotFoundError(key)
            path.append((node, i))
            node = node.children[i]
        leaf = node
        j = bisect_left(leaf.keys, key)
        if j == len(leaf.keys) or leaf.keys[j] != key:
            raise KeyNotFoundError(key)
        for nd, i in path:
            nd.counts[i] -= 1
            nd.count -= 1
            nd._cum = None
        if leaf.freqs[j] == 1:
            del leaf.keys[j]
            del leaf.freqs[j]
            leaf._karr = None
        else:
            leaf.freqs[j] -= 1
        leaf.count -= 1
        leaf._cum = None
        self.last_touched = len(path) + 1
        if path and len(leaf.keys) < self.min_fill:
            self._rebalance(leaf, path)

    def _rebalance(self, node, path) -> None:
        mf = self.min_fill
        while path and len(node.keys) < mf:
            parent, i = path.pop()
            left = parent.children[i - 1] if i > 0 else None
            right = parent.children[i + 1] if i + 1 < len(parent.children) else None
            self.last_touched += 1
            parent._cum = None
            if left is not None and len(left.keys) > mf:
                moved = self._move_last(left, node)
                parent.counts[i - 1] -= moved
                parent.counts[i] += moved
                parent.keys[i] = node.keys[0]
                return
            if right is not None and len(right.keys) > mf:
                moved = self._move_first(right, node)
                parent.counts[i + 1] -= moved
                parent.counts[i] += moved
                parent.keys[i + 1] = right.keys[0]
                return
            if left is not None:
                self._merge(left, node)
                parent.counts[i - 1] += parent.counts[i]
                del parent.keys[i], parent.children[i], parent.counts[i]
            else:
                self._merge(node, right)
                parent.counts[i] += parent.counts[i + 1]
                del parent.keys[i + 1], parent.children[i + 1], parent.counts[i + 1]
            node = parent
        while type(self.root) is _Inner and len(self.root.children) == 1:
            self.root = self.root.children[0]

    @staticmethod
    def _move_last(src, dst) -> int:
        if type(src) is _Leaf:
            dst.keys.insert(0, src.keys.pop())
            moved = src.freqs.pop()
            dst.freqs.insert(0, moved)
            src._karr = dst._karr = None
        else:
            dst.keys.insert(0, src.keys.pop())
            dst.children.insert(0, src.children.pop())
            moved = src.counts.pop()
            dst.counts.insert(0, moved)
        src.count -= moved
        dst.count += moved
        src._cum = dst._cum = None
        return moved

    @staticmethod
    def _move_first(src, dst) -> int:
        if type(src) is _Leaf:
            dst.keys.append(src.keys.pop(0))
            moved = src.freqs.pop(0)
            dst.freqs.append(moved)
            src._karr = dst._karr = None
        else:
            dst.keys.append(src.keys.pop(0))
            dst.children.append(src.children.pop(0))
            moved = src.counts.pop(0)
            dst.counts.append(moved)
        src.count -= moved
        dst.count += moved
        src._cum = dst._cum = None
        return moved

    @staticmethod
    def _merge(left, right) -> None:
        """Append ``right`` onto ``left``; the caller unlinks ``right`` from the parent."""
        left.keys.extend(right.keys)
        if type(left) is _Leaf:
            left.freqs.extend(right.freqs)
            left._karr = None
            left.next = right.next
            if right.next is not None:
                right.next.prev = left
        else:
            left.children.extend(right.children)
            left.counts.extend(right.counts)
        left.count += right.count
        left._cum = None

    def modify(self, old_key: int, new_key: int) -> None:
        """Replace one copy of ``old_key`` by ``new_key``."""
        self.delete(old_key)
        self.insert(new_key)

    # ------------------------------------------------------------- bijection

    def key2rank(self, key: int) -> int:
        """Number of stored copies with key <= ``key``."""
        r = 0
        node = self.root
        while type(node) is _Inner:
            i = bisect_right(node.keys, key) - 1
            if i < 0:
                return r
            if i:
                r += int(node.cum()[i - 1])
            node = node.children[i]
        j = bisect_right(node.keys, key)
        if j:
            r += int(node.cum()[j - 1])
        return r

    def key2rank_exclusive(self, key: int) -> int:
        """Number of stored copies with key < ``key``."""
        r = 0
        node = self.root
        while type(node) is _Inner:
            i = bisect_right(node.keys, key) - 1
            if i < 0:
                return r
            if i:
                r += int(node.cum()[i - 1])
            node = node.children[i]
        j = bisect_left(node.keys, key)
        if j:
            r += int(node.cum()[j - 1])
        return r

    def rank2key(self, rank: int) -> int:
        """Key of the ``rank``-th stored copy, 1-indexed."""
        if not 1 <= rank <= self.root.count:
            raise IndexError(f"rank {rank} outside [1, {self.root.count}]")
        node = self.root
        while type(node) is _Inner:
            cum = node.cum()
            i = int(cum.searchsorted(rank))
            if i:
                rank -= int(cum[i - 1])
            node = node.children[i]
        return node.keys[int(node.cum().searchsorted(rank))]

    def rank2key_many(self, ranks) -> np.ndarray:
        """Vectorised ``rank2key``: one shared descent for all ranks."""
        ranks = np.asarray(ranks, dtype=np.int64)
        kd = self.schema.key_dtype
        if ranks.size == 0:
            return np.empty(0, dtype=kd)
        n = self.root.count
        if ranks.min() < 1 or ranks.max() > n:
            raise IndexError(f"ranks outside [1, {n}]")
        order = np.argsort(ranks, kind="stable")
        sr = ranks[order]
        sorted_out = np.empty(sr.shape[0], dtype=kd)
        stack = [(self.root, 0, sr.shape[0], 0)]
        while stack:
            node, a, b, base = stack.pop()
            seg = sr[a:b] - base if base else sr[a:b]
            cum = node.cum()
            pos = cum.searchsorted(seg)
            if type(node) is _Leaf:
                if node._karr is None:
                    node._karr = np.array(node.keys, dtype=kd)
                sorted_out[a:b] = node._karr[pos]
                continue
            first, last = int(pos[0]), int(pos[-1])
            if first == last:
                stack.append((node.children[first], a, b, base + (int(cum[first - 1]) if first else 0)))
                continue
            cuts = np.flatnonzero(pos[1:] != pos[:-1]) + 1
            starts = [0] + cuts.tolist()
            ends = cuts.tolist() + [b - a]
            for s, e in zip(starts, ends):
                ci = int(pos[s])
                stack.append((node.children[ci], a + s, a + e, base + (int(cum[ci - 1]) if ci else 0)))
        out = np.empty_like(sorted_out)
        out[order] = sorted_out
        return out

    def count_between(self, low_key: int, high_key: int) -> int:
        """Stored copies with key in [low_key, high_key]."""
        if high_key < low_key:
            return 0
        return self.key2rank(high_key) - self.key2rank_exclusive(low_key)

    # ----------------------------------------------------------- range query

    def _seek(self, key: int) -> tuple[_Leaf, int]:
        leaf = self._find_leaf(key)
        return leaf, bisect_left(leaf.keys, key)

    def range_query_exact(self, box: QueryBox) -> RangeResult:
        """Exact cardinality by a forward leaf scan that skips gaps via BIGMIN."""
        card = 0
        scanned = 0
        zhigh = box.zhigh
        contains = box.contains
        leaf, j = self._seek(box.zlow)
        while leaf is not None:
            keys = leaf.keys
            nk = len(keys)
            while j < nk:
                k = keys[j]
                if k > zhigh:
                    return RangeResult(card, scanned)
                scanned += 1
                if contains(k):
                    card += leaf.freqs[j]
                    j += 1
                    continue
                nxt = next_in_box(k, box)
                if nxt is None:
                    return RangeResult(card, scanned)
                if nxt <= keys[-1]:
                    j = bisect_left(keys, nxt, j + 1)
                else:
                    nl = leaf.next
                    if nl is not None and nl.keys and nxt <= nl.keys[-1]:
                        leaf, j = nl, bisect_left(nl.keys, nxt)
                    else:
                        leaf, j = self._seek(nxt)
                    break
            else:
                leaf, j = leaf.next, 0
        return RangeResult(card, scanned)

    # ------------------------------------------------------------------ audit

    def audit(self) -> None:
        """Recompute every counter from the leaves up; raise AssertionError on mismatch."""
        leaf_depths = set()
        leaves: list[_Leaf] = []

        def walk(node, depth, lo, hi, is_root):
            # returns subtree count; lo <= all keys < hi (None = unbounded)
            if not is_root:
                _check(self.min_fill <= len(node.keys) <= self.fanout,
                       f"occupancy {len(node.keys)} outside [{self.min_fill}, {self.fanout}]")
            else:
                _check(len(node.keys) <= self.fanout)
            if type(node) is _Leaf:
                leaf_depths.add(depth)
                leaves.append(node)
                _check(len(node.keys) == len(node.freqs))
                _check(all(f >= 1 for f in node.freqs), "zero-frequency slot")
                _check(all(a < b for a, b in zip(node.keys, node.keys[1:])), "leaf keys unsorted")
                if node.keys:
                    _check(lo is None or node.keys[0] >= lo)
                    _check(hi is None or node.keys[-1] < hi)
                total = sum(node.freqs)
                _check(node.count == total, f"leaf C_Num {node.count} != {total}")
                if node._cum is not None:
                    _check(node._cum.tolist() == np.cumsum(node.freqs).tolist())
                return total
            _check(len(node.keys) == len(node.children) == len(node.counts))
            _check(all(a < b for a, b in zip(node.keys, node.keys[1:])), "separators unsorted")
            total = 0
            for i, child in enumerate(node.children):
                clo = node.keys[i]
                chi = node.keys[i + 1] if i + 1 < len(node.keys) else hi
                if lo is not None:
                    _check(clo >= lo)
                c = walk(child, depth + 1, clo, chi, False)
                _check(node.counts[i] == c, f"child counter {node.counts[i]} != {c}")
                total += c
            _check(node.count == total, f"inner C_Num {node.count} != {total}")
            return total

        walk(self.root, 1, None, None, True)
        _check(len(leaf_depths) == 1, f"leaves at depths {leaf_depths}")
        for a, b in zip(leaves, leaves[1:]):
            _check(a.next is b and b.prev is a, "broken leaf chain")
        _check(leaves[0].prev is None and leaves[-1].next is None)

    # --------------------------------------------------------------- snapshot

    def to_bytes(self) -> bytes:
        """Versioned snapshot: header, then a level-order dump of all nodes."""
        s = self.schema
        kw = 8 if s.n <= 64 else 16
        names = [nm.encode() for nm in s.names]
        head = [_MAGIC, struct.pack("<HH", _VERSION, s.m), bytes(s.betas)]
        for nm in names:
            head.append(struct.pack("<H", len(nm)) + nm)
        head.append(struct.pack("<IQH", self.fanout, self.root.count, self.depth))
        parts = head
        level = [self.root]
        while level:
            parts.append(struct.pack("<I", len(level)))
            nxt = []
            for node in level:
                parts.append(struct.pack("<I", len(node.keys)))
                vals = node.freqs if type(node) is _Leaf else node.counts
                parts.append(_pack_keys(node.keys, kw))
                parts.append(np.array(vals, dtype="<u8").tobytes())
                if type(node) is _Inner:
                    nxt.extend(node.children)
            level = nxt
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CountedIndex":
        if data[:4] != _MAGIC:
            raise ValueError("not an index snapshot (bad magic)")
        off = 4
        version, m = struct.unpack_from("<HH", data, off)
        off += 4
        if version != _VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        betas = list(data[off:off + m])
        off += m
        names = []
        for _ in range(m):
            (ln,) = struct.unpack_from("<H", data, off)
            off += 2
            names.append(data[off:off + ln].decode())
            off += ln
        fanout, n_total, depth = struct.unpack_from("<IQH", data, off)
        off += struct.calcsize("<IQH")
        schema = AttributeSchema(betas, names)
        kw = 8 if schema.n <= 64 else 16
        idx = cls(schema, fanout)
        levels = []
        for d in range(depth):
            (cnt,) = struct.unpack_from("<I", data, off)
            off += 4
            raw = []
            for _ in range(cnt):
                (sz,) = struct.unpack_from("<I", data, off)
                off += 4
                keys = _unpack_keys(data, off, sz, kw)
                off += sz * kw
                vals = np.frombuffer(data, dtype="<u8", count=sz, offset=off).astype(np.int64).tolist()
                off += sz * 8
                raw.append((keys, vals))
            levels.append(raw)
        below: list = []
        for d in range(depth - 1, -1, -1):
            cur = []
            if d == depth - 1:
                cur = [_Leaf(k, v) for k, v in levels[d]]
                for a, b in zip(cur, cur[1:]):
                    a.next = b
                    b.prev = a
            else:
                pos = 0
                for k, v in levels[d]:
                    cur.append(_Inner(k, below[pos:pos + len(k)], v))
                    pos += len(k)
            below = cur
        idx.root = below[0]
        if idx.root.count != n_total:
            raise ValueError("snapshot corrupt: tuple count mismatch")
        return idx

    def save(self, path) -> int:
        data = self.to_bytes()
        with open(path, "wb") as f:
            f.write(data)
        return len(data)

    @classmethod
    def load(cls, path) -> "CountedIndex":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


def _check(cond: bool, message: str = "index invariant violated") -> None:
    # explicit raise so audits still run under python -O
    if not cond:
        raise AssertionError(message)


def _pack_keys(keys: list[int], kw: int) -> bytes:
    if kw == 8:
        return np.array(keys, dtype="<u8").tobytes()
    return b"".join(k.to_bytes(16, "little") for k in keys)


def _unpack_keys(data: bytes, off: int, count: int, kw: int) -> list[int]:
    if kw == 8:
        return [int(k) for k in np.frombuffer(data, dtype="<u8", count=count, offset=off).tolist()]
    return [int.from_bytes(data[off + i * 16: off + (i + 1) * 16], "little") for i in range(count)]
