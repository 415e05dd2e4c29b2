"""Monte-Carlo experiment runner, sweeps, and statistical validations.

Experiments are described by an ExperimentSpec (JSON-serializable; the CLI
mirrors its fields).  monte_carlo() runs the trials, writes one CSV row
per trial plus a JSON summary, and returns aggregate ExperimentStats with
a Wilson confidence interval on the success rate.  The validate_* helpers
are the statistical oracles for the protocol's derivation claims: each
report carries the nominal whp budget next to the measured fraction.

Output files are written atomically (temp file + rename).  Identical
specs with identical master seeds produce byte-identical files; per-trial
seeds are derived from (master_seed, trial_index), so trial order and
parallelism degree never change results.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.random import Generator, PCG64, SeedSequence
from scipy import stats as sp_stats

from .adversary import STRATEGY_NAMES, make_strategy
from .combined import coin_level, probe_length, run_phase_budget
from .core import ConfigError, ProtocolParams, Value, build_initial, make_params
from .engine import (
    Outcome,
    PROTOCOLS,
    RunResult,
    default_max_exchanges,
    run,
)
from .scheduler import PairStream, trial_seeds
from . import _kernels as K

CSV_FIELDS = ("trial", "protocol", "n", "f", "a", "b", "profile", "seed",
              "outcome", "parallel_time", "exchanges_total", "drift_max")


# =====================================================================
# Experiment specification and aggregate statistics
# =====================================================================

@dataclass(frozen=True)
class ExperimentSpec:
    """One Monte-Carlo experiment: protocol, population, adversary, trials."""

    protocol: str = "scfd"
    profile: str = "desk"
    n: int = 1000
    a: int | None = None
    b: int | None = None
    d: int | None = None            # alternative to a/b: gap with a majority side
    majority: str = "A"
    adversary: str = "none"
    adversary_args: dict = field(default_factory=dict)
    f: int = 0
    trials: int = 1
    master_seed: int = 0
    max_exchanges: int | None = None
    out: str | None = None          # CSV path; summary JSON lands next to it

    def tallies(self) -> tuple[int, int]:
        if self.d is not None:
            if self.a is not None or self.b is not None:
                raise ConfigError("give either a/b or d, not both")
            if self.majority not in ("A", "B"):
                raise ConfigError("majority must be A or B")
            hi = (self.n + self.d + 1) // 2
            lo = self.n - hi
            return (hi, lo) if self.majority == "A" else (lo, hi)
        if self.a is None or self.b is None:
            raise ConfigError("spec needs a and b (or d with majority)")
        return self.a, self.b

    def validate(self) -> "ExperimentSpec":
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.adversary not in STRATEGY_NAMES:
            raise ConfigError(f"unknown adversary {self.adversary!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        a, b = self.tallies()
        if a + b != self.n or min(a, b) < 0:
            raise ConfigError(f"tallies a={a} b={b} do not fill n={self.n}")
        if not (0 <= self.f <= self.n):
            raise ConfigError(f"f={self.f} out of range")
        return self

    def majority_value(self) -> Value | None:
        a, b = self.tallies()
        if a > b:
            return Value.A
        if b > a:
            return Value.B
        return None

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentSpec":
        data = json.loads(Path(path).read_text())
        return cls(**data)


@dataclass(frozen=True)
class ExperimentStats:
    spec: ExperimentSpec
    trials: int
    correct_count: int
    minority_count: int
    failed_count: int
    budget_count: int
    mixed_count: int
    success_rate: float
    wilson_low: float
    wilson_high: float
    mean_parallel_time: float
    median_parallel_time: float
    mean_drift_max: float

    def summary_dict(self) -> dict:
        d = asdict(self)
        d["spec"] = asdict(self.spec)
        return d

    def __str__(self) -> str:
        return (f"{self.spec.protocol} n={self.spec.n} f={self.spec.f} "
                f"adv={self.spec.adversary}: success {self.success_rate:.3f} "
                f"[{self.wilson_low:.3f},{self.wilson_high:.3f}] over "
                f"{self.trials} trials (minority {self.minority_count}, "
                f"failed {self.failed_count}, budget {self.budget_count}, "
                f"mixed {self.mixed_count}); mean ptime "
                f"{self.mean_parallel_time:.1f}")


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    z2 = z * z
    mid = (p + z2 / (2 * n)) / (1 + z2 / n)
    half = (z / (1 + z2 / n)) * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    return (max(0.0, mid - half), min(1.0, mid + half))


# =====================================================================
# Budgets
# =====================================================================

def experiment_budget(protocol: str, params: ProtocolParams) -> int:
    """Default exchange budget for harness experiments.

    Wider than the engine default: single-protocol runs may legitimately
    need up to the 20*ln^3(n) parallel steps the acceptance allows, and
    the combined protocol always executes three fixed-length runs.
    """
    n = params.n
    if protocol == "combined":
        per_run = run_phase_budget(params) * params.D * n // 2
        return math.ceil(3 * per_run * 1.2) + n * probe_length(n)
    return math.ceil(24 * n * math.log(n) ** 3)


# =====================================================================
# Monte-Carlo driver
# =====================================================================

def _classify(result: RunResult, majority: Value | None) -> str:
    if result.outcome == Outcome.MIXED:
        return "mixed"
    if result.outcome == Outcome.FAILED:
        return "failed"
    if result.outcome == Outcome.BUDGET_EXHAUSTED:
        return "budget"
    decided = Value.A if result.outcome == Outcome.DECIDED_A else Value.B
    if majority is None:
        return "minority"
    return "correct" if decided == majority else "minority"


def _run_trial(spec: ExperimentSpec, params: ProtocolParams, seed: int,
               budget: int) -> RunResult:
    a, b = spec.tallies()
    pop = build_initial(spec.n, a, b, f=spec.f)
    strategy = make_strategy(spec.adversary, **spec.adversary_args)
    return run(spec.protocol, params, pop, strategy, seed=seed,
               max_exchanges=budget)


def monte_carlo(spec: ExperimentSpec, jobs: int = 1,
                params: ProtocolParams | None = None) -> ExperimentStats:
    """Run spec.trials independent runs and aggregate."""
    spec.validate()
    params = params or make_params(spec.profile, spec.n)
    budget = spec.max_exchanges or experiment_budget(spec.protocol, params)
    seeds = trial_seeds(spec.master_seed, spec.trials)
    majority = spec.majority_value()

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                lambda s: _run_trial(spec, params, s, budget), seeds))
    else:
        results = [_run_trial(spec, params, s, budget) for s in seeds]

    counts = {"correct": 0, "minority": 0, "failed": 0, "budget": 0, "mixed": 0}
    ptimes = []
    drifts = []
    for r in results:
        counts[_classify(r, majority)] += 1
        if not math.isnan(r.parallel_time):
            ptimes.append(r.parallel_time)
        drifts.append(r.drift_max)
    lo, hi = wilson_interval(counts["correct"], spec.trials)
    stats = ExperimentStats(
        spec=spec,
        trials=spec.trials,
        correct_count=counts["correct"],
        minority_count=counts["minority"],
        failed_count=counts["failed"],
        budget_count=counts["budget"],
        mixed_count=counts["mixed"],
        success_rate=counts["correct"] / spec.trials,
        wilson_low=lo,
        wilson_high=hi,
        mean_parallel_time=float(np.mean(ptimes)) if ptimes else float("nan"),
        median_parallel_time=float(np.median(ptimes)) if ptimes else float("nan"),
        mean_drift_max=float(np.mean(drifts)),
    )
    if spec.out:
        _write_outputs(spec, results, stats)
    return stats


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(spec: ExperimentSpec, results: Sequence[RunResult]) -> str:
    import io

    a, b = spec.tallies()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for t, r in enumerate(results):
        pt = "" if math.isnan(r.parallel_time) else repr(r.parallel_time)
        writer.writerow([t, spec.protocol, spec.n, spec.f, a, b, spec.profile,
                         r.seed, r.outcome.value, pt, r.exchanges_total,
                         r.drift_max])
    return buf.getvalue()


def _write_outputs(spec: ExperimentSpec, results: Sequence[RunResult],
                   stats: ExperimentStats) -> None:
    out = Path(spec.out)
    _atomic_write(out, _csv_text(spec, results))
    summary = out.with_suffix(out.suffix + ".summary.json")
    _atomic_write(summary, json.dumps(stats.summary_dict(), indent=2,
                                      sort_keys=True) + "\n")


# =====================================================================
# Sweeps
# =====================================================================

def sweep(grid: dict[str, list], base: ExperimentSpec,
          out: str | Path | None = None, jobs: int = 1) -> tuple[list[ExperimentStats], int]:
    """Cartesian product of grid cells over base; returns (rows, n_skipped).

    Invalid cells are skipped with a warning row; callers map a nonzero
    skip count to a nonzero exit code.
    """
    if not grid:
        raise ConfigError("empty sweep grid")
    for key, values in grid.items():
        if key not in ExperimentSpec.__dataclass_fields__:
            raise ConfigError(f"unknown grid dimension {key!r}")
        if not values:
            raise ConfigError(f"grid dimension {key!r} is empty")

    keys = sorted(grid)
    cells: list[dict] = [{}]
    for key in keys:
        cells = [dict(c, **{key: v}) for c in cells for v in grid[key]]

    rows: list[ExperimentStats] = []
    skipped = 0
    for cell in cells:
        # d overrides a/b cleanly when both appear in base + grid
        spec = replace(base, **cell)
        if "d" in cell:
            spec = replace(spec, a=None, b=None)
        spec = replace(spec, out=None)
        try:
            spec.validate()
        except ConfigError as exc:
            print(f"warning: skipping cell {cell}: {exc}")
            skipped += 1
            continue
        rows.append(monte_carlo(spec, jobs=jobs))
    if out is not None:
        import io

        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["protocol", "profile", "n", "f", "a", "b", "adversary",
                         "trials", "correct", "minority", "failed", "budget",
                         "mixed", "success_rate", "wilson_low", "wilson_high",
                         "mean_parallel_time"])
        for s in rows:
            a, b = s.spec.tallies()
            writer.writerow([s.spec.protocol, s.spec.profile, s.spec.n,
                             s.spec.f, a, b, s.spec.adversary, s.trials,
                             s.correct_count, s.minority_count, s.failed_count,
                             s.budget_count, s.mixed_count,
                             repr(s.success_rate), repr(s.wilson_low),
                             repr(s.wilson_high), repr(s.mean_parallel_time)])
        _atomic_write(Path(out), buf.getvalue())
    return rows, skipped


# =====================================================================
# Validation oracles
# =====================================================================

@dataclass(frozen=True)
class DriftReport:
    """Pure-scheduler counter-gap check against the 2*zeta bound."""

    n: int
    drift_c: float
    trials: int
    exchanges_per_trial: int
    bound: float                 # 2*zeta
    pass_fraction: float         # trials with max gap < bound
    nominal_fraction: float      # the whp budget 1 - 2/n
    max_gap_mean: float

    @property
    def passed(self) -> bool:
        return self.trials == 0 or self.pass_fraction >= min(
            0.96, self.nominal_fraction)

    def __str__(self) -> str:
        return (f"drift n={self.n}: pass {self.pass_fraction:.3f} "
                f"(nominal >= {self.nominal_fraction:.3f}) against gap "
                f"< {self.bound:.0f}; mean max gap {self.max_gap_mean:.0f}")


def validate_drift(n: int, drift_c: float = 1.0, trials: int = 100,
                   master_seed: int = 0) -> DriftReport:
    if n < 2:
        raise ConfigError("need n >= 2")
    r_total = math.ceil(drift_c * n * math.log(n) ** 3)
    zeta = math.sqrt(12.0 * drift_c) * math.log(n) ** 2
    bound = 2.0 * zeta
    gaps = []
    for seed in trial_seeds(master_seed, trials):
        ss = SeedSequence(seed).spawn(1)[0]
        rng = Generator(PCG64(ss))
        stream = PairStream(rng, n)
        unwrapped = np.zeros(n, np.int64)
        cap = int(2 * r_total / n + 12 * math.sqrt(2 * r_total / n + 1)) + 64
        hist = np.zeros(cap, np.int64)
        hist[0] = n
        regs = np.zeros(K.N_REGS, np.int64)
        done = 0
        while done < r_total:
            us, vs = stream.next_chunk()
            m = min(us.shape[0], r_total - done)
            K.drift_kernel(us[:m], vs[:m], n, unwrapped, hist, regs)
            done += m
        if regs[K._R_HIST_OVF]:
            raise RuntimeError("drift histogram overflow")
        gaps.append(int(regs[K._R_DRIFT_GAP]))
    passed = sum(1 for g in gaps if g < bound)
    return DriftReport(
        n=n,
        drift_c=drift_c,
        trials=trials,
        exchanges_per_trial=r_total,
        bound=bound,
        pass_fraction=passed / trials if trials else 1.0,
        nominal_fraction=1.0 - 2.0 / n,
        max_gap_mean=float(np.mean(gaps)) if gaps else 0.0,
    )


@dataclass(frozen=True)
class PhaseEnvelope:
    """One phase-transition check against the derivation envelopes."""

    kind: str
    checks: int
    violations: int
    nominal_budget: float        # the per-phase whp failure budget (2/n)

    @property
    def violation_fraction(self) -> float:
        return self.violations / self.checks if self.checks else 0.0


@dataclass(frozen=True)
class TallyReport:
    protocol: str
    n: int
    a: int
    b: int
    f: int
    trials: int
    cancellation: PhaseEnvelope
    duplication: PhaseEnvelope
    conservation_violations: int   # symmetric protocol, f=0 only: exact
    phase_span_checks: int
    phase_span_violations: int
    span_bound: float              # z = nD/2 + n*zeta + 1
    mean_first_cancellation: float

    @property
    def passed(self) -> bool:
        ok = (self.cancellation.violation_fraction
              <= max(0.05, 3 * self.cancellation.nominal_budget))
        ok = ok and (self.duplication.violation_fraction
                     <= max(0.05, 3 * self.duplication.nominal_budget))
        if self.protocol == "scfd" and self.f == 0:
            ok = ok and self.conservation_violations == 0
        return ok

    def __str__(self) -> str:
        return (f"tallies {self.protocol} n={self.n}: cancellation "
                f"violations {self.cancellation.violation_fraction:.4f} "
                f"(budget {self.cancellation.nominal_budget:.4f}), "
                f"duplication {self.duplication.violation_fraction:.4f}, "
                f"conservation violations {self.conservation_violations}, "
                f"span violations {self.phase_span_violations}/"
                f"{self.phase_span_checks} vs {self.span_bound:.0f}")


def validate_phase_tallies(protocol: str, n: int, a: int, b: int, f: int = 0,
                           trials: int = 50, master_seed: int = 1,
                           adversary: str = "none",
                           max_exchanges: int | None = None) -> TallyReport:
    """Check per-phase tallies against the cancellation and duplication
    envelopes, the exact symmetric-cancellation conservation law, and the
    phase-span bound."""
    if protocol not in ("acpd", "scfd"):
        raise ConfigError("phase-tally validation supports acpd and scfd")
    params = make_params("desk", n)
    budget = max_exchanges or experiment_budget(protocol, params)
    slack_lo = math.sqrt(2 * n * math.log(n))
    slack_hi = math.sqrt(3 * n * math.log(n))
    spread = math.sqrt(4 * n * math.log(n))
    zeta = params.zeta
    span_bound = n * params.D / 2 + n * zeta + 1

    canc_checks = canc_viol = 0
    dup_checks = dup_viol = 0
    conservation_violations = 0
    span_checks = span_viol = 0
    first_canc = []
    strategy_name = adversary
    for seed in trial_seeds(master_seed, trials):
        pop = build_initial(n, a, b, f=f)
        r = run(protocol, params, pop, make_strategy(strategy_name),
                seed=seed, max_exchanges=budget)
        for row in r.per_phase_tallies:
            if row.span >= 0:
                span_checks += 1
                if row.span > span_bound:
                    span_viol += 1
            if row.kind.name == "CANCELLATION":
                if protocol == "scfd" and f == 0 and row.delta_a != row.delta_b:
                    conservation_violations += 1
                if row.phase == 0:
                    first_canc.append(-row.delta_a)
                # one-shot cancellation count envelope (asymmetric protocol)
                if protocol == "acpd" and row.a > 0 and row.b > 0:
                    expected = row.a * row.b / n
                    a_c = -row.delta_a
                    canc_checks += 1
                    if not (expected - slack_lo - spread <= a_c
                            <= expected + f + slack_hi + spread):
                        canc_viol += 1
            elif row.kind.name == "DUPLICATION":
                d_in = abs(row.a - row.b)
                d_out = abs((row.a + row.delta_a) - (row.b + row.delta_b))
                dup_checks += 1
                if protocol == "acpd":
                    floor_ = d_in * (1 + row.empty / n) - f - 4 * slack_lo
                else:
                    floor_ = 2 * d_in - f - 4 * slack_lo
                if d_out < floor_ - spread:
                    dup_viol += 1
    return TallyReport(
        protocol=protocol,
        n=n, a=a, b=b, f=f,
        trials=trials,
        cancellation=PhaseEnvelope("cancellation", canc_checks, canc_viol,
                                   2.0 / n),
        duplication=PhaseEnvelope("duplication", dup_checks, dup_viol, 2.0 / n),
        conservation_violations=conservation_violations,
        phase_span_checks=span_checks,
        phase_span_violations=span_viol,
        span_bound=span_bound,
        mean_first_cancellation=float(np.mean(first_canc)) if first_canc else 0.0,
    )


@dataclass(frozen=True)
class SchedulerReport:
    n: int
    draws: int
    chi2_pvalue: float
    p_threshold: float
    max_inclusion_sigma: float   # worst per-node deviation from 2/n, in sigmas
    inclusion_bound: float

    @property
    def passed(self) -> bool:
        return (self.chi2_pvalue > self.p_threshold
                and self.max_inclusion_sigma <= self.inclusion_bound)

    def __str__(self) -> str:
        return (f"scheduler n={self.n}: chi2 p={self.chi2_pvalue:.4f} "
                f"(> {self.p_threshold}), worst inclusion dev "
                f"{self.max_inclusion_sigma:.2f} sigma (<= {self.inclusion_bound})")


def validate_scheduler(n: int = 20, draws: int = 1_000_000,
                       master_seed: int = 2) -> SchedulerReport:
    """Chi-squared uniformity over all C(n,2) pairs plus per-node 2/n checks."""
    rng = Generator(PCG64(SeedSequence(master_seed)))
    us = rng.integers(0, n, size=draws, dtype=np.int64)
    vs = rng.integers(0, n - 1, size=draws, dtype=np.int64)
    vs = vs + (vs >= us)
    lo = np.minimum(us, vs)
    hi = np.maximum(us, vs)
    idx = lo * n + hi
    counts = np.bincount(idx, minlength=n * n)
    cells = np.array([counts[i * n + j] for i in range(n)
                      for j in range(i + 1, n)])
    _, p = sp_stats.chisquare(cells)
    incl = np.bincount(us, minlength=n) + np.bincount(vs, minlength=n)
    p_node = 2.0 / n
    sigma = math.sqrt(draws * p_node * (1 - p_node))
    worst = float(np.max(np.abs(incl - draws * p_node)) / sigma)
    return SchedulerReport(
        n=n,
        draws=draws,
        chi2_pvalue=float(p),
        p_threshold=1e-3,
        max_inclusion_sigma=worst,
        inclusion_bound=3.0,
    )


@dataclass(frozen=True)
class CoinReport:
    n: int
    bias_c: float
    level: int
    draws: int
    expected_p: float            # exactly 2**-level
    observed_p: float
    deviation_sigma: float
    bound_sigma: float

    @property
    def passed(self) -> bool:
        return self.deviation_sigma <= self.bound_sigma

    def __str__(self) -> str:
        return (f"coin n={self.n} bias_c={self.bias_c}: L={self.level}, "
                f"observed {self.observed_p:.6f} vs 2^-{self.level}="
                f"{self.expected_p:.6f} ({self.deviation_sigma:.2f} sigma)")


def validate_coin(n: int = 1024, bias_c: float = 1.0, draws: int = 1_000_000,
                  master_seed: int = 3) -> CoinReport:
    from .combined import biased_coin
    from .core import make_params

    level = coin_level(n, bias_c)
    params = make_params("desk", n, bias_c=bias_c)
    rng = Generator(PCG64(SeedSequence(master_seed)))
    ones = sum(biased_coin(rng, params) for _ in range(draws))
    expected = 2.0 ** (-level)
    sigma = math.sqrt(draws * expected * (1 - expected)) if 0 < expected < 1 else 1.0
    dev = abs(ones - draws * expected) / sigma if sigma else 0.0
    return CoinReport(
        n=n,
        bias_c=bias_c,
        level=level,
        draws=draws,
        expected_p=expected,
        observed_p=ones / draws,
        deviation_sigma=float(dev),
        bound_sigma=3.0,
    )
