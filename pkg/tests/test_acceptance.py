"""Acceptance suite: one test per numbered criterion, each printing a
PASS line with the measured quantity next to its frozen threshold.

Run with `pytest tests/test_acceptance.py -v -s`.  All tolerances are
fixed constants; trial counts and population settings follow the criteria
verbatim.  Monte-Carlo results here are property-based at desk scale: the
underlying guarantees are with-high-probability statements, so each
threshold is a calibrated floor, not an asymptotic constant.
"""

import math
import time
import warnings

import numpy as np
import pytest

import byzpop as bp
from byzpop.adversary import make_strategy
from byzpop.combined import combined_decide
from byzpop.core import Value, build_initial, make_params
from byzpop.engine import Outcome, run
from byzpop.harness import (
    ExperimentSpec,
    experiment_budget,
    monte_carlo,
    validate_coin,
    validate_drift,
    validate_scheduler,
)

A, B = Value.A, Value.B


def _report(criterion: str, text: str) -> None:
    print(f"[criterion {criterion}] PASS: {text}")


def _single_budget(n: int) -> int:
    return math.ceil(24 * n * math.log(n) ** 3)


def _outcomes(protocol, params, n, a, b, f, adversary, trials, seed_base,
              budget):
    results = []
    for seed in bp.trial_seeds(seed_base, trials):
        pop = build_initial(n, a, b, f=f)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            results.append(run(protocol, params, pop, make_strategy(adversary),
                               seed=seed, max_exchanges=budget))
    return results


class TestCriterion1Unanimous:
    def test_every_protocol_decides_unanimously(self, warm_kernels):
        n, trials = 1000, 50
        params = make_params("desk", n)
        started = time.monotonic()
        for protocol in bp.PROTOCOLS:
            budget = (experiment_budget("combined", params)
                      if protocol == "combined" else _single_budget(n))
            results = _outcomes(protocol, params, n, n, 0, 0, "none",
                                trials, 1001, budget)
            outcomes = [r.outcome for r in results]
            assert outcomes == [Outcome.DECIDED_A] * trials, \
                f"{protocol}: {[o.value for o in outcomes if o != Outcome.DECIDED_A]}"
        elapsed = time.monotonic() - started
        assert elapsed <= 120.0, f"unanimous suite took {elapsed:.0f}s"
        _report("1", f"4 protocols x {trials} trials all DecidedA in "
                     f"{elapsed:.0f}s (<= 120s)")


class TestCriterion2SymmetricSmallGap:
    def test_unit_scale_gap(self, warm_kernels):
        n, trials = 1000, 200
        params = make_params("desk", n)
        results = _outcomes("scfd", params, n, 501, 499, 0, "none", trials,
                            2001, _single_budget(n))
        wins = sum(r.outcome == Outcome.DECIDED_A for r in results)
        mixed = sum(r.outcome == Outcome.MIXED for r in results)
        ptimes = [r.parallel_time for r in results
                  if not math.isnan(r.parallel_time)]
        cap = 20 * math.log(n) ** 3
        # criterion 7 rides along: exact conservation on every f=0 run
        violations = sum(
            1 for r in results for row in r.per_phase_tallies
            if row.kind == bp.PhaseKind.CANCELLATION and row.delta_a != row.delta_b)
        assert mixed == 0
        assert violations == 0
        assert wins / trials >= 0.90, f"success {wins}/{trials}"
        mean_pt = float(np.mean(ptimes))
        assert mean_pt <= cap
        _report("2", f"success {wins / trials:.3f} (>= 0.90), mean parallel "
                     f"time {mean_pt:.0f} (<= {cap:.0f})")


class TestCriterion3AsymmetricLargeGap:
    def test_sqrt_scale_gap(self, warm_kernels):
        n, trials = 2000, 200
        d = math.ceil(4 * math.sqrt(n * math.log(n)))
        a = (n + d) // 2
        params = make_params("desk", n)
        results = _outcomes("acpd", params, n, a, n - a, 0, "none", trials,
                            3001, _single_budget(n))
        wins = sum(r.outcome == Outcome.DECIDED_A for r in results)
        mixed = sum(r.outcome == Outcome.MIXED for r in results)
        assert mixed == 0
        assert wins / trials >= 0.90, f"success {wins}/{trials}"
        _report("3", f"d={d}: success {wins / trials:.3f} (>= 0.90)")


class TestCriterion4ByzantineResilience:
    def test_booster_resilience_both_protocols(self, warm_kernels):
        n, f, trials = 2000, 20, 200
        d = math.ceil(f + 4 * math.sqrt(n * math.log(n)))
        a = (n + d) // 2
        params = make_params("desk", n)
        rates = {}
        for protocol in ("acpd", "scfd"):
            results = _outcomes(protocol, params, n, a, n - a, f,
                                "full-booster", trials, 4001,
                                _single_budget(n))
            mixed = sum(r.outcome == Outcome.MIXED for r in results)
            wins = sum(r.outcome == Outcome.DECIDED_A for r in results)
            assert mixed == 0, f"{protocol}: {mixed} mixed outcomes"
            rates[protocol] = wins / trials
            assert rates[protocol] >= 0.85, f"{protocol}: {rates[protocol]:.3f}"
        _report("4", f"d={d}, f={f}: acpd {rates['acpd']:.3f}, "
                     f"scfd {rates['scfd']:.3f} (>= 0.85, zero Mixed)")


class TestCriterion5LowerBoundDemo:
    def test_static_flip_overturns_small_gap(self, warm_kernels):
        trials = 200
        params = make_params("desk", 1000)
        attack = _outcomes("scfd", params, 1000, 505, 495, 10, "static-flip",
                           trials, 5001, _single_budget(1000))
        minority_rate = sum(r.outcome == Outcome.DECIDED_B
                            for r in attack) / trials
        # matched honest control at the criterion's literal control tallies
        control_params = make_params("desk", 1010)
        control = _outcomes("scfd", control_params, 1010, 495, 515, 0, "none",
                            trials, 5002, _single_budget(1010))
        control_rate = sum(r.outcome == Outcome.DECIDED_B
                           for r in control) / trials
        assert minority_rate >= 0.8 * control_rate, \
            f"attack {minority_rate:.3f} vs control {control_rate:.3f}"
        _report("5", f"minority decided {minority_rate:.3f} >= 0.8 x "
                     f"control {control_rate:.3f}")


class TestCriterion6Drift:
    def test_counter_gap_bound(self, warm_kernels):
        rep = validate_drift(1000, drift_c=1.0, trials=100, master_seed=6001)
        assert rep.pass_fraction >= 0.96, str(rep)
        _report("6", f"gap < {rep.bound:.0f} in {rep.pass_fraction:.2f} of "
                     f"trials (>= 0.96; nominal {rep.nominal_fraction:.3f})")


class TestCriterion7Conservation:
    def test_exact_conservation_across_cancellation_phases(self, warm_kernels):
        n, trials = 500, 60
        params = make_params("desk", n)
        checked = violations = 0
        for seed in bp.trial_seeds(7001, trials):
            r = run("scfd", params, build_initial(n, 253, 247), seed=seed,
                    max_exchanges=_single_budget(n))
            for row in r.per_phase_tallies:
                if row.kind == bp.PhaseKind.CANCELLATION:
                    checked += 1
                    if row.delta_a != row.delta_b:
                        violations += 1
        assert checked > 0 and violations == 0
        _report("7", f"{checked} cancellation phases, 0 conservation "
                     f"violations (exact)")


class TestCriterion8SchedulerAndCoin:
    def test_pair_uniformity_chi_squared(self, warm_kernels):
        rep = validate_scheduler(n=20, draws=1_000_000, master_seed=8001)
        assert rep.chi2_pvalue > 1e-3, str(rep)
        assert rep.max_inclusion_sigma <= 3.0
        _report("8a", f"chi2 p={rep.chi2_pvalue:.4f} (> 0.001), inclusion "
                      f"dev {rep.max_inclusion_sigma:.2f} sigma")

    def test_coin_frequency(self, warm_kernels):
        rep = validate_coin(n=1024, bias_c=1.0, draws=1_000_000,
                            master_seed=8002)
        assert rep.level == 7 and rep.expected_p == 1 / 128
        assert rep.deviation_sigma <= 3.0, str(rep)
        _report("8b", f"coin P(1)={rep.observed_p:.6f} vs 1/128 "
                      f"({rep.deviation_sigma:.2f} sigma <= 3)")


class TestCriterion9Combined:
    def test_decision_rule_examples(self):
        assert combined_decide(1, [A, B, B], [B, None, None]) == A
        assert combined_decide(0, [A, A, A], [B, None, None]) == A
        assert combined_decide(0, [A, A, B], [B, None, None]) == B
        _report("9a", "decision-rule examples reproduce exactly")

    def test_large_gap_answers_by_asymmetric_path(self, warm_kernels):
        n, trials = 1000, 100
        d = math.ceil(6 * math.sqrt(n * math.log(n)))
        a = (n + d) // 2
        params = make_params("desk", n)
        budget = experiment_budget("combined", params)
        results = _outcomes("combined", params, n, a, n - a, 0, "none",
                            trials, 9001, budget)
        wins = sum(r.outcome == Outcome.DECIDED_A for r in results)
        assert sum(r.outcome == Outcome.MIXED for r in results) == 0
        assert wins / trials >= 0.85, f"{wins}/{trials}"
        _report("9b", f"d={d}: majority via asymmetric path in "
                      f"{wins / trials:.2f} (>= 0.85)")

    def test_unit_gap_answers_by_symmetric_path(self, warm_kernels):
        n, trials = 1000, 100
        params = make_params("desk", n)
        budget = experiment_budget("combined", params)
        results = _outcomes("combined", params, n, 501, 499, 0, "none",
                            trials, 9002, budget)
        wins = sum(r.outcome == Outcome.DECIDED_A for r in results)
        assert sum(r.outcome == Outcome.MIXED for r in results) == 0
        assert wins / trials >= 0.80, f"{wins}/{trials}"
        _report("9c", f"d=2: correct in {wins / trials:.2f} (>= 0.80)")


class TestCriterion10Replay:
    def test_byte_identical_csv(self, warm_kernels, tmp_path):
        texts = []
        for name in ("one.csv", "two.csv"):
            out = tmp_path / name
            spec = ExperimentSpec(protocol="scfd-tf", n=1000, a=1000, b=0,
                                  trials=50, master_seed=1001, out=str(out),
                                  max_exchanges=_single_budget(1000))
            monte_carlo(spec)
            texts.append(out.read_bytes())
        assert texts[0] == texts[1]
        _report("10", f"replayed CSV identical ({len(texts[0])} bytes)")


class TestCriterion11TimeScaling:
    def test_parallel_time_tracks_cubed_log(self, warm_kernels):
        trials = 60
        fitted = {}
        for n in (500, 1000, 2000):
            params = make_params("desk", n)
            results = _outcomes("scfd", params, n, (n + 2) // 2, n // 2 - 1,
                                0, "none", trials, 11_000 + n,
                                _single_budget(n))
            ptimes = [r.parallel_time for r in results
                      if not math.isnan(r.parallel_time)]
            assert len(ptimes) >= 0.9 * trials
            fitted[n] = float(np.mean(ptimes)) / math.log(n) ** 3
        ratio = max(fitted.values()) / min(fitted.values())
        assert ratio <= 2.0, f"fitted constants {fitted}"
        _report("11", "fitted c = " + ", ".join(
            f"{n}:{c:.1f}" for n, c in fitted.items()) +
            f" (max/min {ratio:.2f} <= 2)")
