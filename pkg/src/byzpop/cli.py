"""Command-line interface: run experiments, sweeps, validations, and the
canned lower-bound demonstrations.

Exit code 0 means every requested assertion/validation passed.  A config
file (JSON mirroring ExperimentSpec field names) may supply defaults;
explicit flags override file values.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .adversary import STRATEGY_NAMES, make_strategy
from .core import ConfigError, PROFILES, build_initial, make_params
from .engine import PROTOCOLS, run as engine_run
from .harness import (
    ExperimentSpec,
    experiment_budget,
    monte_carlo,
    sweep,
    validate_coin,
    validate_drift,
    validate_phase_tallies,
    validate_scheduler,
)
from .scheduler import parse_seed, trial_seeds


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--profile", choices=PROFILES)
    p.add_argument("--n", type=int)
    p.add_argument("--a", type=int)
    p.add_argument("--b", type=int)
    p.add_argument("--d", type=int, help="tally gap (alternative to --a/--b)")
    p.add_argument("--majority", choices=("A", "B"))
    p.add_argument("--f", type=int, help="corruption budget")
    p.add_argument("--adversary", choices=STRATEGY_NAMES)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=parse_seed, help="master seed (decimal or 0x-hex)")
    p.add_argument("--max-exchanges", type=int)
    p.add_argument("--out", help="CSV output path (summary JSON lands next to it)")
    p.add_argument("--trace", choices=("off", "on-failure", "full"), default="off")
    p.add_argument("--config", help="JSON file with ExperimentSpec defaults")
    p.add_argument("--jobs", type=int, default=1)


def _spec_from_args(args) -> ExperimentSpec:
    fields: dict = {}
    if args.config:
        fields.update(json.loads(Path(args.config).read_text()))
    mapping = {
        "protocol": args.protocol,
        "profile": args.profile,
        "n": args.n,
        "a": args.a,
        "b": args.b,
        "d": args.d,
        "majority": args.majority,
        "f": args.f,
        "adversary": args.adversary,
        "trials": args.trials,
        "master_seed": args.seed,
        "max_exchanges": args.max_exchanges,
        "out": args.out,
    }
    for key, value in mapping.items():
        if value is not None:
            fields[key] = value
    return ExperimentSpec(**fields).validate()


def _cmd_run(args) -> int:
    spec = _spec_from_args(args)
    if args.trace != "off":
        # traced runs go through the instrumented engine path one by one
        params = make_params(spec.profile, spec.n)
        budget = spec.max_exchanges or experiment_budget(spec.protocol, params)
        a, b = spec.tallies()
        bad = 0
        for seed in trial_seeds(spec.master_seed, spec.trials):
            pop = build_initial(spec.n, a, b, f=spec.f)
            strategy = make_strategy(spec.adversary, **spec.adversary_args)
            r = engine_run(spec.protocol, params, pop, strategy, seed=seed,
                           max_exchanges=budget, trace=args.trace)
            kept = len(r.trace) if r.trace is not None else 0
            print(f"seed={seed} outcome={r.outcome.value} "
                  f"exchanges={r.exchanges_total} trace_records={kept}")
            if r.outcome.value in ("Mixed", "Failed"):
                bad += 1
        return 1 if bad else 0
    stats = monte_carlo(spec, jobs=args.jobs)
    print(stats)
    if stats.mixed_count > 0:
        print("error: observed Mixed outcomes (agreement safety violation)")
        return 1
    return 0


def _cmd_sweep(args) -> int:
    grid = json.loads(Path(args.grid).read_text())
    base = _spec_from_args(args)
    rows, skipped = sweep(grid, base, out=args.out, jobs=args.jobs)
    for row in rows:
        print(row)
    if skipped:
        print(f"error: {skipped} invalid sweep cell(s) skipped")
        return 1
    if any(r.mixed_count for r in rows):
        print("error: observed Mixed outcomes (agreement safety violation)")
        return 1
    return 0


def _cmd_validate(args) -> int:
    ok = True
    if args.check in ("drift", "all"):
        rep = validate_drift(args.n, drift_c=args.drift_c, trials=args.trials,
                             master_seed=args.seed)
        print(rep)
        ok &= rep.passed
    if args.check in ("tallies", "all"):
        a = args.a if args.a is not None else (args.n * 3) // 5
        b = args.n - a
        rep = validate_phase_tallies(args.protocol or "acpd", args.n, a, b,
                                     f=args.f or 0, trials=min(args.trials, 50),
                                     master_seed=args.seed)
        print(rep)
        ok &= rep.passed
    if args.check in ("scheduler", "all"):
        rep = validate_scheduler(n=min(args.n, 30), draws=args.draws,
                                 master_seed=args.seed)
        print(rep)
        ok &= rep.passed
    if args.check in ("coin", "all"):
        rep = validate_coin(n=args.n, bias_c=args.bias_c, draws=args.draws,
                            master_seed=args.seed)
        print(rep)
        ok &= rep.passed
    print("validation:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def _cmd_demo_lower_bound(args) -> int:
    """Canned adversary demonstrations: a static flip inside the d < 2f
    window overturns the majority, and the weak first-dual capture does
    the same with d < 2(f-1)."""
    n = args.n
    trials = args.trials
    ok = True

    f = max(4, n // 100)
    d = f  # < 2f
    a = (n + d) // 2
    spec = ExperimentSpec(protocol="scfd", profile="desk", n=n, a=a, b=n - a,
                          adversary="static-flip", f=f, trials=trials,
                          master_seed=args.seed)
    stats = monte_carlo(spec, jobs=args.jobs)
    rate = stats.minority_count / trials
    print(f"static-flip (d={d} < 2f={2 * f}): minority decided in "
          f"{rate:.2f} of {trials} trials")
    ok &= rate >= 0.6

    f2 = max(6, n // 50)
    d2 = max(2, f2 - 2)  # < 2(f-1)
    a2 = (n + d2) // 2
    spec2 = ExperimentSpec(protocol="scfd", profile="desk", n=n, a=a2, b=n - a2,
                           adversary="weak-first-dual", f=f2, trials=trials,
                           master_seed=args.seed + 1)
    stats2 = monte_carlo(spec2, jobs=args.jobs)
    rate2 = stats2.minority_count / trials
    print(f"weak-first-dual (d={d2} < 2(f-1)={2 * (f2 - 1)}): minority decided "
          f"in {rate2:.2f} of {trials} trials")
    ok &= rate2 >= 0.6

    print("demo-lower-bound:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="byzpop",
        description="Byzantine-resilient majority population protocols: "
                    "Monte-Carlo experiments and validations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="one Monte-Carlo experiment")
    _add_spec_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid of experiments")
    p_sweep.add_argument("grid", help="JSON file: {field: [values, ...]}")
    _add_spec_flags(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_val = sub.add_parser("validate", help="statistical validation oracles")
    p_val.add_argument("check", choices=("drift", "tallies", "scheduler",
                                         "coin", "all"))
    p_val.add_argument("--n", type=int, default=1000)
    p_val.add_argument("--a", type=int)
    p_val.add_argument("--f", type=int, default=0)
    p_val.add_argument("--protocol", choices=("acpd", "scfd"))
    p_val.add_argument("--drift-c", type=float, default=1.0)
    p_val.add_argument("--bias-c", type=float, default=1.0)
    p_val.add_argument("--trials", type=int, default=100)
    p_val.add_argument("--draws", type=int, default=1_000_000)
    p_val.add_argument("--seed", type=parse_seed, default=0)
    p_val.set_defaults(func=_cmd_validate)

    p_demo = sub.add_parser("demo-lower-bound",
                            help="canned adversary constructions")
    p_demo.add_argument("--n", type=int, default=1000)
    p_demo.add_argument("--trials", type=int, default=50)
    p_demo.add_argument("--seed", type=parse_seed, default=0)
    p_demo.add_argument("--jobs", type=int, default=1)
    p_demo.set_defaults(func=_cmd_demo_lower_bound)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
