import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.random import Generator, PCG64, SeedSequence

from byzpop.core import ConfigError
from byzpop.scheduler import (
    PairStream,
    decode_pair,
    next_pair,
    parse_seed,
    run_streams,
    trial_seeds,
)


def _rng(seed=0):
    return Generator(PCG64(SeedSequence(seed)))


class TestNextPair:
    def test_two_nodes_single_pair(self):
        rng = _rng()
        assert all(next_pair(rng, 2) == (0, 1) for _ in range(32))

    def test_rejects_tiny_population(self):
        with pytest.raises(ConfigError):
            next_pair(_rng(), 1)

    def test_three_node_frequencies(self):
        rng = _rng(7)
        draws = 30_000
        counts = {}
        for _ in range(draws):
            p = next_pair(rng, 3)
            counts[p] = counts.get(p, 0) + 1
        assert set(counts) == {(0, 1), (0, 2), (1, 2)}
        for c in counts.values():
            assert abs(c - draws / 3) < 4 * np.sqrt(draws * (1 / 3) * (2 / 3))

    def test_per_node_inclusion(self):
        n = 10
        rng = _rng(3)
        incl = np.zeros(n)
        draws = 40_000
        for _ in range(draws):
            u, v = next_pair(rng, n)
            incl[u] += 1
            incl[v] += 1
        p = 2 / n
        sigma = np.sqrt(draws * p * (1 - p))
        assert np.all(np.abs(incl - draws * p) < 4.5 * sigma)


class TestDecodePair:
    @given(st.integers(0, 99), st.integers(0, 98))
    def test_canonical_and_distinct(self, u_raw, v_raw):
        u, v = decode_pair(u_raw, v_raw)
        assert 0 <= u < v <= 99

    def test_remap(self):
        assert decode_pair(3, 3) == (3, 4)
        assert decode_pair(3, 2) == (2, 3)
        assert decode_pair(0, 0) == (0, 1)


class TestStreams:
    def test_same_seed_same_pairs(self):
        s1 = _rng(11)
        s2 = _rng(11)
        seq1 = [next_pair(s1, 50) for _ in range(100)]
        seq2 = [next_pair(s2, 50) for _ in range(100)]
        assert seq1 == seq2

    def test_pair_stream_chunks_deterministic(self):
        st1 = PairStream(_rng(5), 40, chunk=64)
        st2 = PairStream(_rng(5), 40, chunk=64)
        for _ in range(3):
            u1, v1 = st1.next_chunk()
            u2, v2 = st2.next_chunk()
            assert np.array_equal(u1, u2) and np.array_equal(v1, v2)

    def test_chunk_of_one_matches_scalar_sampler(self):
        stream = PairStream(_rng(9), 30, chunk=1)
        rng = _rng(9)
        for _ in range(50):
            us, vs = stream.next_chunk()
            assert decode_pair(int(us[0]), int(vs[0])) == next_pair(rng, 30)

    def test_trial_seeds_deterministic_and_distinct(self):
        s1 = trial_seeds(42, 16)
        s2 = trial_seeds(42, 16)
        assert s1 == s2
        assert len(set(s1)) == 16
        assert trial_seeds(43, 16) != s1

    def test_run_streams_independent(self):
        sched, adv, coin = run_streams(99)
        a = sched.integers(0, 1 << 30)
        sched2, adv2, coin2 = run_streams(99)
        assert adv.integers(0, 1 << 30) == adv2.integers(0, 1 << 30)
        assert sched2.integers(0, 1 << 30) == a


class TestParseSeed:
    def test_decimal_and_hex(self):
        assert parse_seed("123") == 123
        assert parse_seed("0x10") == 16

    def test_invalid(self):
        with pytest.raises(ConfigError):
            parse_seed("zord")
        with pytest.raises(ConfigError):
            parse_seed("-3")
