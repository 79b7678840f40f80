import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awm.patterns import (
    DimensionError,
    PatternError,
    achieved_overlap,
    as_bipolar,
    ber_from_overlap,
    degrade_to_overlap,
    flip_count,
    make_rng,
    overlap,
    pack,
    packed_overlap,
    random_bipolar,
    read_patterns,
    sgn,
    unpack,
    write_patterns,
)
from conftest import bipolar

vectors = st.integers(1, 300).flatmap(
    lambda n: st.tuples(
        st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n),
        st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n),
    )
)


class TestBipolar:
    def test_rejects_non_unit_entries(self):
        with pytest.raises(PatternError):
            as_bipolar([1, 0, -1])

    def test_rejects_empty(self):
        with pytest.raises(PatternError):
            as_bipolar([])

    def test_immutable(self):
        v = as_bipolar([1, -1])
        with pytest.raises(ValueError):
            v[0] = -1

    def test_sgn_zero_is_plus(self):
        assert sgn(np.array([-2.0, 0.0, 3.0, -0.0])).tolist() == [-1, 1, 1, 1]


class TestRandomBipolar:
    def test_deterministic(self):
        assert np.array_equal(random_bipolar(8, 1, 0), random_bipolar(8, 1, 0))

    def test_zero_length_rejected(self):
        with pytest.raises(PatternError):
            random_bipolar(0, 1)

    def test_balanced(self):
        v = random_bipolar(100_000, 1, 0)
        assert set(np.unique(v)) == {-1, 1}
        assert abs(v.mean()) <= 0.02

    def test_streams_differ(self):
        base = random_bipolar(8, 1, 0)
        assert sum(np.array_equal(base, random_bipolar(8, 1, s)) for s in range(1, 101)) == 0

    def test_stream_collision_rate(self):
        # 2^-8 per independent pair; 5000 pairs -> mean 19.5, sd ~4.4
        hits = sum(np.array_equal(random_bipolar(8, 3, 2 * s), random_bipolar(8, 3, 2 * s + 1)) for s in range(5000))
        assert abs(hits - 5000 / 256) < 5 * math.sqrt(5000 / 256)

    def test_rng_rejects_out_of_range_seed(self):
        with pytest.raises(PatternError):
            make_rng(2**64, 0)
        with pytest.raises(PatternError):
            make_rng(-1, 0)


class TestOverlap:
    def test_identity_and_antipode(self, rng):
        v = bipolar(rng, 50)
        assert overlap(v, v) == 1.0
        assert overlap(v, -v) == -1.0

    def test_half_flip(self):
        assert overlap(np.array([1, 1, 1, 1]), np.array([1, 1, -1, -1])) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            overlap(np.ones(3), np.ones(4))

    @given(vectors)
    def test_symmetric_and_counts_matches(self, pair):
        a, b = np.array(pair[0]), np.array(pair[1])
        match = int(np.sum(a == b))
        assert overlap(a, b) == overlap(b, a)
        assert overlap(a, b) == (match - (a.size - match)) / a.size

    def test_random_pair_statistics(self):
        rng = np.random.default_rng(7)
        n, pairs = 1024, 10_000
        a = bipolar(rng, pairs, n).astype(np.int64)
        b = bipolar(rng, pairs, n).astype(np.int64)
        m = (a * b).sum(axis=1) / n
        se_mean = math.sqrt(1 / n / pairs)
        assert abs(m.mean()) < 5 * se_mean
        # variance of the sample variance for a near-normal variable is 2 s^4 / (pairs - 1)
        se_var = math.sqrt(2 / (pairs - 1)) / n
        assert abs(m.var() - 1 / n) < 5 * se_var


class TestDegrade:
    def test_target_one_is_identity(self, rng):
        v = bipolar(rng, 33)
        assert np.array_equal(degrade_to_overlap(v, 1.0, 3), v)

    def test_target_minus_one_negates(self, rng):
        v = bipolar(rng, 33)
        assert np.array_equal(degrade_to_overlap(v, -1.0, 3), -v)

    @pytest.mark.parametrize("seed", range(5))
    def test_four_flips_at_n10(self, seed, rng):
        v = bipolar(rng, 10)
        assert flip_count(10, 0.2) == 4
        assert int(np.sum(degrade_to_overlap(v, 0.2, seed) != v)) == 4

    def test_round_half_even(self):
        # n (1 - m) / 2 = 2.5 -> 2, 3.5 -> 4
        assert flip_count(10, 0.5) == 2
        assert flip_count(14, 0.5) == 4

    def test_domain(self, rng):
        with pytest.raises(PatternError):
            degrade_to_overlap(bipolar(rng, 4), 1.5, 0)

    @settings(max_examples=60)
    @given(st.integers(1, 400), st.floats(-1, 1), st.integers(0, 2**64 - 1))
    def test_achieved_overlap_and_ber(self, n, m, seed):
        v = random_bipolar(n, seed % 1000)
        out = degrade_to_overlap(v, m, seed)
        got = overlap(v, out)
        assert got == achieved_overlap(n, m)
        assert ber_from_overlap(got) == pytest.approx((1 - got) / 2, abs=1e-15)

    def test_flip_positions_look_uniform(self):
        v = np.ones(20, dtype=np.int8)
        hits = np.zeros(20)
        for s in range(2000):
            hits += degrade_to_overlap(v, 0.5, s) < 0
        # 5 flips per draw, expect 500 per position; binomial sd ~19.4
        assert np.all(np.abs(hits - 500) < 5 * 19.4)


class TestBer:
    @pytest.mark.parametrize("m, ber", [(1.0, 0.0), (0.0, 0.5), (-1.0, 1.0)])
    def test_values(self, m, ber):
        assert ber_from_overlap(m) == ber

    def test_domain(self):
        with pytest.raises(PatternError):
            ber_from_overlap(1.01)


class TestPacking:
    @given(vectors)
    def test_packed_overlap_matches(self, pair):
        a, b = np.array(pair[0], dtype=np.int8), np.array(pair[1], dtype=np.int8)
        n = a.size
        assert packed_overlap(pack(a), pack(b), n) == overlap(a, b)
        assert np.array_equal(unpack(pack(a), n), a)

    def test_bit_convention(self):
        assert pack(np.array([1, -1, -1, -1, -1, -1, -1, 1])).tolist() == [0b10000001]

    @given(st.integers(1, 70), st.integers(1, 5), st.integers(0, 1000))
    def test_file_roundtrip(self, n, count, seed):
        rows = bipolar(np.random.default_rng(seed), count, n)
        buf = io.BytesIO()
        write_patterns(buf, rows)
        data = buf.getvalue()
        assert data[:7] == b"AWMPAT1"
        assert int.from_bytes(data[7:11], "little") == n
        assert int.from_bytes(data[11:15], "little") == count
        assert len(data) == 15 + count * ((n + 7) // 8)
        assert np.array_equal(read_patterns(io.BytesIO(data)), rows)

    def test_bad_magic(self):
        with pytest.raises(PatternError):
            read_patterns(io.BytesIO(b"NOTAPAT" + bytes(8)))

    def test_truncated(self):
        buf = io.BytesIO()
        write_patterns(buf, np.ones((2, 16), dtype=np.int8))
        with pytest.raises(PatternError):
            read_patterns(io.BytesIO(buf.getvalue()[:-1]))


class TestBitErrorRate:
    @given(vectors)
    def test_counts(self, pair):
        a, b = np.array(pair[0]), np.array(pair[1])
        from awm.patterns import bit_error_rate

        assert bit_error_rate(a, b) == int(np.sum(a != b)) / a.size
        assert bit_error_rate(a, b) == pytest.approx(ber_from_overlap(overlap(a, b)), abs=1e-15)
