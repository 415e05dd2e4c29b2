import math
import warnings

import numpy as np
import pytest

import byzpop as bp
from byzpop.adversary import make_strategy
from byzpop.core import ConfigError, NodeState, Value, build_initial, make_params
from byzpop.engine import (
    Outcome,
    default_max_exchanges,
    run,
    unwrapped_counters,
)

SMALL = make_params("desk", 60)


def small_pop(a=40, b=20, f=0):
    return build_initial(60, a, b, f=f)


class TestRunBasics:
    def test_unanimous_population_decides_its_value(self, warm_kernels):
        params = make_params("desk", 64)
        pop = build_initial(64, 64, 0)
        r = run("scfd", params, pop, seed=3)
        assert r.outcome == Outcome.DECIDED_A
        assert r.final_tally.decided_a == 64
        assert r.decision_exchange > 0
        assert r.parallel_time == r.decision_exchange / 64

    def test_unanimous_b(self, warm_kernels):
        params = make_params("desk", 64)
        r = run("scfd-tf", params, build_initial(64, 0, 64), seed=4)
        assert r.outcome == Outcome.DECIDED_B

    def test_budget_exhaustion(self):
        r = run("acpd", SMALL, small_pop(), seed=5, max_exchanges=100)
        assert r.outcome == Outcome.BUDGET_EXHAUSTED
        assert r.exchanges_total == 100
        assert math.isnan(r.parallel_time)

    def test_same_seed_same_result(self, warm_kernels):
        a = run("scfd", SMALL, small_pop(), seed=77, max_exchanges=40_000)
        b = run("scfd", SMALL, small_pop(), seed=77, max_exchanges=40_000)
        assert a.outcome == b.outcome
        assert a.exchanges_total == b.exchanges_total
        assert a.final_tally == b.final_tally
        assert np.array_equal(a.unwrapped, b.unwrapped)

    def test_unknown_protocol_rejected(self):
        with pytest.raises(ConfigError):
            run("raft", SMALL, small_pop())

    def test_population_must_match_params(self):
        with pytest.raises(ConfigError):
            run("scfd", SMALL, build_initial(61, 40, 21))

    def test_theory_profile_rejects_excess_faults(self):
        params = make_params("theory-scfd", 200)
        with pytest.raises(ConfigError):
            run("scfd", params, build_initial(200, 150, 50, f=10))

    def test_desk_profile_warns_on_excess_faults(self):
        with pytest.warns(UserWarning):
            run("scfd", SMALL, small_pop(f=10), seed=1, max_exchanges=50)

    def test_default_budget_formula(self):
        n = SMALL.n
        assert default_max_exchanges("acpd", SMALL) == math.ceil(
            8 * n * math.log(n) ** 3)
        assert default_max_exchanges("combined", SMALL) > 3 * default_max_exchanges(
            "acpd", SMALL)


class TestUnwrappedCounters:
    def test_zero_exchanges(self):
        r = run("scfd", SMALL, small_pop(), seed=1, max_exchanges=0)
        assert unwrapped_counters(r).sum() == 0

    def test_each_exchange_touches_two(self):
        r = run("scfd", SMALL, small_pop(), seed=1, max_exchanges=1)
        counts = unwrapped_counters(r)
        assert counts.sum() == 2
        assert np.count_nonzero(counts) == 2

    def test_sum_is_twice_exchanges(self):
        r = run("scfd", SMALL, small_pop(), seed=2, max_exchanges=5000)
        assert unwrapped_counters(r).sum() == 2 * r.exchanges_total


class TestEquivalence:
    """The compiled path must match the reference path bit for bit."""

    CASES = [(proto, adv, f)
             for proto in ("acpd", "scfd", "scfd-tf", "combined")
             for adv, f in (("none", 0), ("static-flip", 6),
                            ("weak-first-dual", 6),
                            ("oblivious-first-dual", 6),
                            ("full-booster", 4))]

    @pytest.mark.parametrize("proto,adv,f", CASES)
    def test_fast_matches_reference(self, warm_kernels, proto, adv, f):
        params = make_params("desk", 80)
        budget = 30_000
        pop = build_initial(80, 48, 32, f=f)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ref = run(proto, params, pop, make_strategy(adv), seed=1234,
                      max_exchanges=budget, engine="reference")
            fast = run(proto, params, pop, make_strategy(adv), seed=1234,
                       max_exchanges=budget, engine="fast")
        assert ref.outcome == fast.outcome
        assert ref.decision_exchange == fast.decision_exchange
        assert ref.exchanges_total == fast.exchanges_total
        assert ref.final_tally == fast.final_tally
        assert ref.drift_max == fast.drift_max
        assert ref.captured_pairs == fast.captured_pairs
        assert ref.per_phase_tallies == fast.per_phase_tallies
        assert np.array_equal(ref.unwrapped, fast.unwrapped)

    def test_fast_requires_builtin_strategy(self):
        class Custom(bp.Strategy):
            name = "custom"

        with pytest.raises(ConfigError):
            run("scfd", SMALL, small_pop(), Custom(), engine="fast")

    def test_auto_falls_back_for_custom_strategy(self):
        class Quiet(bp.Strategy):
            name = "quiet"
            adversary_class = bp.AdversaryClass.FULL_STATIC

        r = run("scfd", SMALL, small_pop(), Quiet(), seed=2,
                max_exchanges=2000, engine="auto")
        assert r.exchanges_total == 2000


class TestDebugChecks:
    @pytest.mark.parametrize("proto", ["acpd", "scfd", "combined"])
    def test_invariants_hold_under_debug(self, proto):
        pop = small_pop(f=4)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run(proto, SMALL, pop, make_strategy("static-flip"), seed=6,
                max_exchanges=6_000, engine="reference", debug=True)

    def test_booster_under_debug(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run("scfd", SMALL, small_pop(f=3), make_strategy("full-booster"),
                seed=7, max_exchanges=6_000, engine="reference", debug=True)


class TestTraces:
    def _traced(self, seed=9, budget=4000, trace="full"):
        return run("scfd", SMALL, small_pop(), seed=seed,
                   max_exchanges=budget, trace=trace, engine="reference")

    def test_replay_reproduces_records(self):
        a = self._traced()
        b = self._traced()
        assert a.trace == b.trace
        assert len(a.trace) == a.exchanges_total

    def test_changes_are_attributed_to_pair_members(self):
        r = self._traced()
        tally0 = {"a": 40, "b": 20, "empty": 0}
        for rec in r.trace:
            for slot, change in enumerate(rec.changes):
                if change.startswith("value:"):
                    old, new = change.removeprefix("value:").split("->")
                    tally0[{"A": "a", "B": "b", "⊥": "empty"}[old]] -= 1
                    tally0[{"A": "a", "B": "b", "⊥": "empty"}[new]] += 1
                elif change.startswith("decided:"):
                    new = change.removeprefix("decided:")
                    key = {"A": "a", "B": "b"}[new]
        assert tally0["a"] == r.final_tally.a
        assert tally0["b"] == r.final_tally.b
        assert tally0["empty"] == r.final_tally.empty

    def test_decided_values_never_change_afterwards(self):
        r = run("scfd", make_params("desk", 64), build_initial(64, 50, 14),
                seed=11, trace="full", engine="reference")
        assert r.outcome == Outcome.DECIDED_A
        decided_at: dict[int, int] = {}
        for rec in r.trace:
            for slot, change in enumerate(rec.changes):
                node = rec.pair[slot]
                if change.startswith("decided:"):
                    decided_at[node] = rec.index
                elif change.startswith("value:"):
                    assert node not in decided_at, \
                        f"node {node} changed value after deciding"

    def test_on_failure_keeps_trace_only_on_bad_outcomes(self):
        good = run("scfd", make_params("desk", 64), build_initial(64, 64, 0),
                   seed=3, trace="on-failure", engine="reference")
        assert good.trace is None

    def test_trace_off_by_default(self, warm_kernels):
        r = run("scfd", SMALL, small_pop(), seed=9, max_exchanges=1000)
        assert r.trace is None


class TestOutcomeClassification:
    def test_mixed_is_flagged(self):
        # two pre-decided opposite nodes force a Mixed outcome as soon as
        # a third node decides
        pop = build_initial(64, 63, 1)
        pop.states[0].endf = True                 # decided A
        pop.states[1].value = Value.B
        pop.states[1].endf = True                 # decided B
        r = run("scfd", make_params("desk", 64), pop, seed=13,
                engine="reference")
        assert r.outcome == Outcome.MIXED

    def test_fully_decided_population_rejected(self):
        pop = build_initial(60, 60, 0)
        for s in pop.states:
            s.endf = True
        with pytest.raises(ConfigError):
            run("scfd", SMALL, pop)

    def test_failed_on_phase_limit(self):
        # a tally tie cannot decide; nodes hit the phase limit and fail
        params = make_params("desk", 60, phases_limit=6)
        r = run("scfd", params, build_initial(60, 30, 30), seed=14)
        assert r.outcome == Outcome.FAILED

    def test_caller_population_never_mutated(self):
        pop = small_pop(f=4)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run("scfd", SMALL, pop, make_strategy("static-flip"), seed=15,
                max_exchanges=2000)
        assert pop.faulty == set()
        assert pop.corruption_budget == 4
        assert all(not s.endf and not s.failf for s in pop.states)


class TestPhaseRows:
    def test_rows_cover_phases_with_snapshots(self, warm_kernels):
        r = run("scfd", SMALL, small_pop(), seed=16, max_exchanges=60_000)
        rows = r.per_phase_tallies
        assert rows[0].phase == 0
        assert rows[0].a == 40 and rows[0].b == 20 and rows[0].empty == 0
        kinds = [row.kind.name for row in rows[:3]]
        assert kinds == ["CANCELLATION", "TERMINATION", "DUPLICATION"]

    def test_spans_bounded_by_lemma_budget(self, warm_kernels):
        params = make_params("desk", 200)
        r = run("scfd", params, build_initial(200, 140, 60), seed=17)
        z = 200 * params.D / 2 + 200 * params.zeta + 1
        for row in r.per_phase_tallies:
            if row.span >= 0:
                assert row.span <= z

    def test_combined_has_no_phase_rows(self, warm_kernels):
        params = make_params("desk", 64)
        r = run("combined", params, build_initial(64, 64, 0), seed=18)
        assert r.per_phase_tallies == ()
