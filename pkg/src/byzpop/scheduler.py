"""Uniform random selection of unordered node pairs, with seeded replay.

Sampling method: draw u uniform in [0, n), draw v uniform in [0, n-1),
remap v >= u to v+1, and store the pair canonically with u < v.  This is
exactly uniform over all C(n, 2) unordered pairs without rejection loops.

Seeding discipline: every run records one 64-bit seed.  From it a
SeedSequence spawns three independent PCG64 streams (scheduler, adversary,
node-local coins), so adversary randomness never perturbs scheduler
replay.  Parallel trials derive per-trial seeds from (master_seed,
trial_index) via SeedSequence.generate_state, which keeps results
order-independent.

The engine consumes pairs in vectorized chunks (a block of u draws
followed by a block of v draws per chunk); both the reference and the
compiled engine read the same chunks, so their pair sequences are
bit-identical.  next_pair() is the single-draw form of the same sampler.
"""

from __future__ import annotations

from typing import Iterator, NamedTuple

import numpy as np
from numpy.random import Generator, PCG64, SeedSequence

from .core import ConfigError

#: Number of pairs drawn per vectorized block.
CHUNK = 1 << 14


class ExchangePair(NamedTuple):
    """An unordered scheduler pick, stored canonically with u < v."""

    u: int
    v: int


def decode_pair(u_raw: int, v_raw: int) -> ExchangePair:
    """Map raw draws (u in [0,n), v in [0,n-1)) to a canonical pair."""
    v = v_raw + 1 if v_raw >= u_raw else v_raw
    return ExchangePair(u_raw, v) if u_raw < v else ExchangePair(v, u_raw)


def next_pair(rng: Generator, n: int) -> ExchangePair:
    """Draw one uniformly random unordered pair."""
    if n < 2:
        raise ConfigError(f"need at least two nodes to draw a pair, got n={n}")
    u = int(rng.integers(0, n))
    v = int(rng.integers(0, n - 1))
    return decode_pair(u, v)


class PairStream:
    """Chunked pair draws from one scheduler generator.

    Yields (us, vs) int64 arrays of raw draws; consumers apply the same
    remap as decode_pair.  Keeping the remap on the consumer side lets the
    compiled kernel and the reference loop share one stream byte-for-byte.
    """

    def __init__(self, rng: Generator, n: int, chunk: int = CHUNK):
        if n < 2:
            raise ConfigError(f"need at least two nodes to draw pairs, got n={n}")
        self.rng = rng
        self.n = n
        self.chunk = chunk

    def next_chunk(self) -> tuple[np.ndarray, np.ndarray]:
        us = self.rng.integers(0, self.n, size=self.chunk, dtype=np.int64)
        vs = self.rng.integers(0, self.n - 1, size=self.chunk, dtype=np.int64)
        return us, vs

    def pairs(self) -> Iterator[ExchangePair]:
        """Endless canonical pairs (reference-engine convenience)."""
        while True:
            us, vs = self.next_chunk()
            for i in range(self.chunk):
                yield decode_pair(int(us[i]), int(vs[i]))


# =====================================================================
# Seed derivation
# =====================================================================

def trial_seeds(master_seed: int, trials: int) -> list[int]:
    """Per-trial 64-bit seeds derived from (master_seed, trial_index)."""
    words = SeedSequence(master_seed).generate_state(trials, dtype=np.uint64)
    return [int(w) for w in words]


def run_streams(seed: int) -> tuple[Generator, Generator, Generator]:
    """The three independent generators of one run.

    Returns (scheduler, adversary, coins).  All are PCG64 (128-bit state).
    """
    kids = SeedSequence(seed).spawn(3)
    return tuple(Generator(PCG64(k)) for k in kids)  # type: ignore[return-value]


def parse_seed(text: str) -> int:
    """Accept a decimal or 0x-hex seed string."""
    try:
        value = int(text, 0)
    except ValueError as exc:
        raise ConfigError(f"cannot parse seed {text!r}") from exc
    if value < 0:
        raise ConfigError("seed must be non-negative")
    return value
