import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rankspace.zorder import (AttributeSchema, CapacityError, DomainError, bigmin, decode, decode_many,
                              encode, encode_many, litmax, next_in_box, prev_in_box)


def interleave_oracle(values, betas):
    """Bit-by-bit interleave written independently of the module."""
    bits = []
    for rnd in range(max(betas)):
        for v, b in zip(values, betas):
            # attributes align at their MSB; narrower ones drop out first
            if rnd < b:
                bits.append((v >> (b - 1 - rnd)) & 1)
    out = 0
    for bit in bits:
        out = (out << 1) | bit
    return out


@pytest.fixture
def square():
    s = AttributeSchema((2, 2))
    return s, s.box((1, 1), (2, 2))


class TestEncoding:
    def test_documented_values(self):
        s = AttributeSchema((3, 3))
        assert encode((0, 0), s) == 0
        assert encode((5, 3), s) == 0b100111 == 39
        assert encode((7, 7), s) == 63
        assert decode(0, s) == (0, 0)
        assert decode(39, s) == (5, 3)
        assert decode(63, s) == (7, 7)

    @pytest.mark.parametrize("betas", [(2, 2), (3, 3), (2, 2, 2), (3, 1), (1, 4, 2)])
    def test_exhaustive_against_oracle(self, betas):
        s = AttributeSchema(betas)
        seen = set()
        for vals in itertools.product(*(range(1 << b) for b in betas)):
            z = encode(vals, s)
            assert z == interleave_oracle(vals, betas)
            assert decode(z, s) == vals
            seen.add(z)
        assert seen == set(range(1 << sum(betas)))

    @given(st.lists(st.integers(1, 30), min_size=1, max_size=5).flatmap(
        lambda bs: st.tuples(st.just(tuple(bs)), st.tuples(*(st.integers(0, (1 << b) - 1) for b in bs)))))
    def test_round_trip_random_widths(self, case):
        betas, vals = case
        s = AttributeSchema(betas)
        z = encode(vals, s)
        assert decode(z, s) == vals
        assert z == interleave_oracle(vals, betas)

    def test_vectorised_matches_scalar(self, rng):
        s = AttributeSchema((10, 7, 12))
        rows = np.stack([rng.integers(0, 1 << b, 500) for b in s.betas], axis=1)
        keys = encode_many(rows, s)
        assert [int(k) for k in keys] == [encode(r, s) for r in rows.tolist()]
        assert np.array_equal(decode_many(keys, s), rows)

    def test_wide_keys_use_python_ints(self):
        s = AttributeSchema((50, 50))
        rows = np.array([[2**50 - 1, 3], [7, 2**49]], dtype=object)
        keys = encode_many(rows, s)
        assert keys.dtype == object
        assert [decode(int(k), s) for k in keys] == [(2**50 - 1, 3), (7, 2**49)]

    def test_monotone_per_attribute(self):
        s = AttributeSchema((3, 3))
        for y in range(8):
            masked = [encode((x, y), s) & s.masks[0] for x in range(8)]
            assert masked == sorted(masked)

    def test_errors(self):
        s = AttributeSchema((3, 3))
        with pytest.raises(DomainError):
            encode((8, 0), s)
        with pytest.raises(ValueError, match="expected 2 values"):
            encode((1,), s)
        with pytest.raises(CapacityError):
            AttributeSchema((64, 65))
        with pytest.raises(ValueError):
            s.box((3, 0), (2, 7))


class TestMembership:
    def test_documented_values(self, square):
        s, box = square
        assert box.contains(encode((1, 1), s))
        assert not box.contains(encode((0, 1), s))
        # key 4 = 0b0100: the only set bit is the first-round bit of attribute 1
        assert decode(4, s) == (0, 2)
        assert not box.contains(4)
        assert sorted(z for z in range(16) if z in box) == [3, 6, 9, 12]

    def test_membership_equivalence(self, rng):
        s = AttributeSchema((3, 2, 3))
        for _ in range(30):
            lo = [int(rng.integers(0, 1 << b)) for b in s.betas]
            hi = [int(rng.integers(l, 1 << b)) for l, b in zip(lo, s.betas)]
            box = s.box(lo, hi)
            keys = np.arange(1 << s.n, dtype=np.uint64)
            expect = [all(l <= v <= h for v, l, h in zip(decode(z, s), lo, hi)) for z in range(1 << s.n)]
            assert [box.contains(z) for z in range(1 << s.n)] == expect
            assert box.contains_many(keys).tolist() == expect


class TestBigminLitmax:
    def test_documented_values(self, square):
        _, box = square
        assert bigmin(4, box) == 6
        assert bigmin(12, box) is None
        assert bigmin(0, box) == 3
        assert litmax(8, box) == 6
        assert litmax(3, box) is None
        assert litmax(13, box) == 12

    @pytest.mark.parametrize("betas", [(2, 2), (3, 3), (2, 2, 2), (4, 1), (1, 3, 2)])
    def test_brute_force(self, betas, rng):
        s = AttributeSchema(betas)
        size = 1 << s.n
        for _ in range(15):
            lo = [int(rng.integers(0, 1 << b)) for b in betas]
            hi = [int(rng.integers(l, 1 << b)) for l, b in zip(lo, betas)]
            box = s.box(lo, hi)
            inside = [z for z in range(size) if all(l <= v <= h for v, l, h in zip(decode(z, s), lo, hi))]
            for p in range(size):
                above = [z for z in inside if z > p]
                below = [z for z in inside if z < p]
                assert bigmin(p, box) == (above[0] if above else None)
                assert litmax(p, box) == (below[-1] if below else None)
                at_or_above = [z for z in inside if z >= p]
                assert next_in_box(p, box) == (at_or_above[0] if at_or_above else None)
                at_or_below = [z for z in inside if z <= p]
                assert prev_in_box(p, box) == (at_or_below[-1] if at_or_below else None)

    def test_bounds_of_key_space(self, square):
        s, box = square
        full = s.full_box()
        assert bigmin(15, full) is None
        assert litmax(0, full) is None
        assert bigmin(-1, box) == 3
