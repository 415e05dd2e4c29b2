"""Statistical behavior of the protocol phases at desk scale.

These tests freeze the Monte-Carlo envelopes the derivations predict:
cancellation counts, gap conservation and amplification, minority wipeout,
donor discipline, and the honest/faulty exposure rate of the scheduler.
"""

import math
import warnings

import numpy as np
import pytest
from numpy.random import Generator, PCG64, SeedSequence

import byzpop as bp
from byzpop.core import Value, build_initial, make_params
from byzpop.harness import validate_phase_tallies


def pop_with_empties(n, a, b):
    """Population holding a non-trivial empty mass (mid-run tallies)."""
    pop = build_initial(n, a, n - a)
    for s in pop.states[a:n - b]:
        s.value = Value.EMPTY
    for s in pop.states[n - b:]:
        s.value = Value.B
    return pop


class TestAsymmetricCancellation:
    def test_first_phase_cancellation_mean(self, warm_kernels):
        """Mean one-shot cancellations of the majority across trials sit in
        the predicted [ab/n - sqrt(2 n ln n), ab/n + sqrt(3 n ln n)] band."""
        n, a, b = 1000, 600, 400
        params = make_params("desk", n)
        budget = int(1.6 * n * params.D / 2)  # phase 0 plus slack
        counts = []
        for seed in bp.trial_seeds(101, 200):
            r = bp.run("acpd", params, build_initial(n, a, b), seed=seed,
                       max_exchanges=budget)
            counts.append(-r.per_phase_tallies[0].delta_a)
        mean = float(np.mean(counts))
        expected = a * b / n
        assert expected - math.sqrt(2 * n * math.log(n)) <= mean
        assert mean <= expected + math.sqrt(3 * n * math.log(n))

    def test_gap_never_shrinks_in_expectation_over_a_cycle(self, warm_kernels):
        """One cancellation+duplication cycle at small tallies keeps the
        expected gap non-decreasing."""
        n, a, b = 1000, 100, 80
        params = make_params("desk", n)
        budget = int((params.gamma + 2 + 0.7) * n * params.D / 2)
        gaps = []
        for seed in bp.trial_seeds(202, 200):
            r = bp.run("acpd", params, pop_with_empties(n, a, b), seed=seed,
                       max_exchanges=budget)
            da = sum(row.delta_a for row in r.per_phase_tallies[:4])
            db = sum(row.delta_b for row in r.per_phase_tallies[:4])
            gaps.append((a + da) - (b + db))
        assert float(np.mean(gaps)) >= (a - b)


class TestSymmetricPhases:
    def test_exact_conservation_every_cancellation_phase(self, warm_kernels):
        rep = validate_phase_tallies("scfd", 500, 260, 240, trials=25,
                                     master_seed=7)
        assert rep.conservation_violations == 0

    def test_doubling_after_one_cycle(self, warm_kernels):
        """Full duplication amplifies the gap by at least 3/2 per cycle at
        small tallies."""
        n, a, b = 1000, 100, 80
        params = make_params("desk", n)
        budget = int(3.7 * n * params.D / 2)
        gaps = []
        for seed in bp.trial_seeds(303, 200):
            r = bp.run("scfd", params, pop_with_empties(n, a, b), seed=seed,
                       max_exchanges=budget)
            da = sum(row.delta_a for row in r.per_phase_tallies[:3])
            db = sum(row.delta_b for row in r.per_phase_tallies[:3])
            gaps.append((a + da) - (b + db))
        assert float(np.mean(gaps)) >= 1.5 * (a - b)

    def test_minority_wipeout_with_long_phases(self, warm_kernels):
        """With D >= 96 ln n and a majority above n/8, one symmetric
        cancellation phase removes the minority entirely in >= 95% of runs."""
        n = 1000
        D = 96 * math.log(n)
        D = int(math.ceil(D / 3) * 3)
        params = make_params("desk", n, D=D)
        budget = int(1.7 * n * params.D / 2)
        wiped = 0
        trials = 60
        for seed in bp.trial_seeds(404, trials):
            r = bp.run("scfd", params, build_initial(n, 600, 400), seed=seed,
                       max_exchanges=budget)
            row = r.per_phase_tallies[0]
            if row.b + row.delta_b == 0:
                wiped += 1
        assert wiped / trials >= 0.95

    def test_donor_single_clone_bound(self, warm_kernels):
        """Adoptions in a duplication phase never exceed the donor count
        (each donor clones at most once per phase)."""
        n, donors = 200, 20
        params = make_params("desk", n)
        pop = build_initial(n, donors, n - donors)
        for s in pop.states[donors:]:
            s.value = Value.EMPTY
        budget = int(3.7 * n * params.D / 2)
        for seed in bp.trial_seeds(505, 30):
            r = bp.run("scfd", params, pop, seed=seed, max_exchanges=budget)
            dup_row = r.per_phase_tallies[2]
            assert 0 <= dup_row.delta_a <= donors
            # and nearly every donor finds an empty recipient
            assert dup_row.delta_a >= donors - 3


class TestFaultyExposure:
    def test_cross_exchanges_per_window(self):
        """Per window of n exchanges, honest/faulty exchanges stay within
        3(f + ln n) in all but a vanishing fraction of windows."""
        n, f = 1000, 50
        rng = Generator(PCG64(SeedSequence(42)))
        windows = 10_000
        us = rng.integers(0, n, size=windows * n, dtype=np.int64)
        vs = rng.integers(0, n - 1, size=windows * n, dtype=np.int64)
        vs = vs + (vs >= us)
        cross = ((us < f) ^ (vs < f)).reshape(windows, n).sum(axis=1)
        bound = 3 * (f + math.log(n))
        violations = int((cross > bound).sum())
        assert violations <= 2  # nominal budget e^{-f/8}/n per window


class TestTimeScalingShape:
    def test_phase_structure_gives_polylog_parallel_time(self, warm_kernels):
        """Unanimous runs decide within a couple of phases regardless of n,
        so parallel time tracks D (about ln^2 n), not n."""
        times = {}
        for n in (200, 400, 800):
            params = make_params("desk", n)
            r = bp.run("scfd", params, build_initial(n, n, 0), seed=8)
            times[n] = r.parallel_time / params.D
        spread = max(times.values()) / min(times.values())
        assert spread < 3.0
