import bisect
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, precondition, rule

from rankspace.index import CountedIndex, KeyNotFoundError
from rankspace.zorder import AttributeSchema, encode_many

SMALL = AttributeSchema((4, 4))  # keys 0..255
WIDE = AttributeSchema((16, 16))


class SortedOracle:
    def __init__(self, keys=()):
        self.keys = sorted(keys)

    def rank(self, k):
        return bisect.bisect_right(self.keys, k)

    def rank_ex(self, k):
        return bisect.bisect_left(self.keys, k)

    def select(self, r):
        return self.keys[r - 1]


@pytest.fixture
def sample():
    return CountedIndex.bulk_load([5, 5, 9, 12, 12, 12], SMALL, fanout=4)


class TestDocumentedExamples:
    def test_empty(self):
        idx = CountedIndex.bulk_load([], SMALL, 4)
        assert len(idx) == 0 and idx.depth == 1
        assert idx.key2rank(200) == 0
        assert idx.range_query_exact(SMALL.full_box()).card == 0
        idx.audit()

    def test_leaf_entries(self, sample):
        assert len(sample) == 6
        assert list(sample.items()) == [(5, 2), (9, 1), (12, 3)]

    def test_key2rank(self, sample):
        assert sample.key2rank(4) == 0
        assert sample.key2rank(9) == 3
        assert sample.key2rank(999) == 6

    def test_key2rank_exclusive(self, sample):
        assert sample.key2rank_exclusive(5) == 0
        assert sample.key2rank_exclusive(12) == 3
        assert sample.key2rank_exclusive(4) == 0

    def test_rank2key(self, sample):
        assert [sample.rank2key(r) for r in (1, 3, 6)] == [5, 9, 12]
        for bad in (0, 7, -1):
            with pytest.raises(IndexError):
                sample.rank2key(bad)

    def test_insert_existing_is_counter_only(self, sample):
        sample.insert(5)
        assert len(sample) == 7
        assert list(sample.items()) == [(5, 3), (9, 1), (12, 3)]

    def test_delete_with_duplicates(self, sample):
        sample.delete(12)
        assert sample.frequency(12) == 2 and len(sample) == 5
        sample.audit()

    def test_modify_identity_and_absent(self, sample):
        before = list(sample.items())
        sample.modify(9, 9)
        assert list(sample.items()) == before
        with pytest.raises(KeyNotFoundError):
            sample.modify(7, 8)
        assert list(sample.items()) == before
        sample.modify(9, 200)
        assert list(sample.items()) == [(5, 2), (12, 3), (200, 1)]

    def test_total_count_matches_max_rank(self, rng):
        keys = rng.integers(0, 1 << 32, 100_000, dtype=np.uint64)
        idx = CountedIndex.bulk_load(keys, WIDE, 100)
        assert idx.depth <= 4
        assert idx.key2rank(int(keys.max())) == 100_000 == len(idx)


class TestMaintenance:
    def test_split_preserves_counts(self):
        idx = CountedIndex(SMALL, fanout=4)
        for k in (1, 2, 3, 4):
            idx.insert(k)
        assert idx.depth == 1
        idx.insert(5)
        assert idx.depth == 2
        assert sum(idx.root.counts) == 5 == idx.root.count
        idx.audit()

    def test_random_inserts_match_multiset(self, rng):
        idx = CountedIndex(WIDE, fanout=5)
        keys = rng.integers(0, 5000, 10_000).tolist()
        for k in keys:
            idx.insert(k)
        idx.audit()
        assert list(idx.items()) == sorted(Counter(keys).items())

    def test_interleaved_updates_match_multiset(self, rng):
        idx = CountedIndex(SMALL, fanout=4)
        ref = Counter()
        for _ in range(5000):
            if ref and rng.random() < 0.45:
                k = rng.choice(sorted(ref.elements()))
                idx.delete(int(k))
                ref[int(k)] -= 1
                ref += Counter()
            else:
                k = int(rng.integers(0, 256))
                idx.insert(k)
                ref[k] += 1
        idx.audit()
        assert list(idx.items()) == sorted(ref.items())

    def test_drain_to_empty(self, rng):
        keys = rng.permutation(3000).tolist()
        idx = CountedIndex.bulk_load(keys, WIDE, 4)
        for k in rng.permutation(keys).tolist():
            idx.delete(k)
        assert len(idx) == 0 and idx.depth == 1
        idx.audit()

    def test_delete_absent(self, sample):
        with pytest.raises(KeyNotFoundError):
            sample.delete(6)
        assert len(sample) == 6

    def test_update_touches_log_nodes(self, rng):
        idx = CountedIndex.bulk_load(rng.integers(0, 1 << 30, 50_000).tolist(), WIDE, 16)
        for k in rng.integers(0, 1 << 30, 500).tolist():
            idx.insert(k)
            assert idx.last_touched <= 3 * idx.depth

    def test_rejects_out_of_space_keys(self):
        idx = CountedIndex(SMALL, 4)
        with pytest.raises(ValueError):
            idx.insert(256)
        with pytest.raises(ValueError):
            CountedIndex(SMALL, 3)


class TestBijection:
    @pytest.mark.parametrize("fanout", [4, 7, 100])
    def test_round_trip_with_duplicates(self, fanout, rng):
        keys = rng.integers(0, 2000, 5000).tolist()
        idx = CountedIndex.bulk_load(keys, WIDE, fanout)
        oracle = SortedOracle(keys)
        for r in range(1, len(keys) + 1):
            k = idx.rank2key(r)
            assert k == oracle.select(r)
            assert idx.key2rank_exclusive(k) < r <= idx.key2rank(k)
        ranks = np.arange(1, len(keys) + 1)
        perm = rng.permutation(ranks)
        assert idx.rank2key_many(perm).tolist() == [oracle.select(int(r)) for r in perm]
        for k in range(0, 2100, 7):
            assert idx.key2rank(k) == oracle.rank(k)
            assert idx.key2rank_exclusive(k) == oracle.rank_ex(k)

    def test_cdf_monotone(self, rng):
        idx = CountedIndex.bulk_load(rng.integers(0, 256, 1000).tolist(), SMALL, 4)
        cdf = [idx.key2rank(k) / len(idx) for k in range(256)]
        assert cdf == sorted(cdf) and cdf[-1] == 1.0

    @given(st.lists(st.integers(0, 255), max_size=300), st.integers(4, 9))
    def test_bulk_load_matches_incremental(self, keys, fanout):
        bulk = CountedIndex.bulk_load(keys, SMALL, fanout)
        inc = CountedIndex(SMALL, fanout)
        for k in keys:
            inc.insert(k)
        bulk.audit()
        inc.audit()
        assert len(bulk) == len(inc)
        for k in set(keys):
            assert bulk.key2rank(k) == inc.key2rank(k)


class TestRangeQuery:
    def test_full_box_scans_every_distinct_key(self, sample):
        res = sample.range_query_exact(SMALL.full_box())
        assert res.card == 6 and res.scanned == 3

    def test_matches_brute_force(self, rng):
        rows = rng.integers(0, 16, (10_000, 2))
        keys = encode_many(rows, SMALL)
        idx = CountedIndex.bulk_load(keys, SMALL, 8)
        for _ in range(1000):
            lo = rng.integers(0, 16, 2)
            hi = np.array([rng.integers(l, 16) for l in lo])
            box = SMALL.box(lo, hi)
            expect = int(((rows >= lo) & (rows <= hi)).all(axis=1).sum())
            assert idx.range_query_exact(box).card == expect

    def test_scan_skips_gaps(self, rng):
        rows = rng.integers(0, 1 << 16, (20_000, 2))
        idx = CountedIndex.bulk_load(encode_many(rows, WIDE), WIDE, 32)
        box = WIDE.box((100, 100), (400, 400))
        res = idx.range_query_exact(box)
        assert res.scanned < idx.distinct_count() / 10


class TestSnapshot:
    def test_round_trip(self, rng, tmp_path):
        idx = CountedIndex.bulk_load(rng.integers(0, 1 << 32, 5000, dtype=np.uint64), WIDE, 9)
        for k in rng.integers(0, 1 << 32, 500).tolist():
            idx.insert(k)
        path = tmp_path / "i.bin"
        size = idx.save(path)
        back = CountedIndex.load(path)
        assert size == path.stat().st_size
        back.audit()
        assert back.schema == idx.schema and back.fanout == idx.fanout
        assert list(back.items()) == list(idx.items())
        assert back.to_bytes() == idx.to_bytes()

    def test_wide_keys(self):
        s = AttributeSchema((60, 60))
        keys = [(1 << 119) + 5, 3, (1 << 120) - 1]
        idx = CountedIndex.bulk_load(keys, s, 4)
        back = CountedIndex.from_bytes(idx.to_bytes())
        assert [k for k, _ in back.items()] == sorted(keys)
        assert back.rank2key_many([3, 1]).tolist() == [(1 << 120) - 1, 3]

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            CountedIndex.from_bytes(b"nope" + bytes(40))


class IndexMachine(RuleBasedStateMachine):
    def __init__(self):
        super().__init__()
        self.idx = CountedIndex(SMALL, fanout=4)
        self.ref = Counter()

    @rule(k=st.integers(0, 255))
    def insert(self, k):
        self.idx.insert(k)
        self.ref[k] += 1

    @precondition(lambda self: self.ref)
    @rule(data=st.data())
    def delete(self, data):
        k = data.draw(st.sampled_from(sorted(self.ref)))
        self.idx.delete(k)
        self.ref[k] -= 1
        if not self.ref[k]:
            del self.ref[k]

    @precondition(lambda self: self.ref)
    @rule(data=st.data(), new=st.integers(0, 255))
    def modify(self, data, new):
        old = data.draw(st.sampled_from(sorted(self.ref)))
        self.idx.modify(old, new)
        self.ref[old] -= 1
        if not self.ref[old]:
            del self.ref[old]
        self.ref[new] += 1

    @invariant()
    def consistent(self):
        self.idx.audit()
        assert list(self.idx.items()) == sorted(self.ref.items())


TestIndexStateMachine = IndexMachine.TestCase
TestIndexStateMachine.settings = settings(max_examples=40, stateful_step_count=60, deadline=None)
