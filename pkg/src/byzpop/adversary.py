"""Adversary abstraction and the built-in corruption strategies.

A strategy sees the execution only through an AdversaryView built for its
observation class: fields outside the class's visibility are absent from
the view (reading them raises), not merely ignored.  Corruption spends a
per-run budget that the engine enforces; presented states of corrupted
nodes are either forged by the strategy or, for strategies that
impersonate honest behavior, produced by the real protocol machine that
the corrupted node keeps running with a flipped initial value.

Strategy randomness comes from a private stream seeded separately from
the scheduler, so adding or swapping an adversary never perturbs the pair
sequence of a replay.
"""

from __future__ import annotations

from enum import Enum
from typing import Sequence

from .common import NodeView, PhaseKind, PhaseSchedule, phase_kind
from .core import ConfigError, Population, ProtocolParams, Value, opposite

PresentedState = NodeView


class AdversaryClass(Enum):
    FULL_DYNAMIC = "full-dynamic"
    WEAK_DYNAMIC = "weak-dynamic"
    WEAK_CONTENT_OBLIVIOUS = "weak-content-oblivious"
    FULL_STATIC = "full-static"
    WEAK_STATIC = "weak-static"


#: Which view fields each observation class may read.  "pair" is the
#: current scheduler pick (absent in the pre-run view handed to static
#: classes).  Weak classes learn pair identities and the results of past
#: exchanges; knowing the input assignment is what lets the weak
#: first-dual construction recognize untouched majority nodes with
#: certainty, so initial_values is granted to every class except the
#: content-oblivious one, which sees traffic only.
_VISIBLE: dict[AdversaryClass, frozenset[str]] = {
    AdversaryClass.FULL_DYNAMIC: frozenset(
        {"n", "params", "exchange_index", "pair", "states", "tallies",
         "initial_values", "exchange_counts", "schedule"}
    ),
    AdversaryClass.FULL_STATIC: frozenset(
        {"n", "params", "exchange_index", "states", "tallies",
         "initial_values", "exchange_counts", "schedule"}
    ),
    AdversaryClass.WEAK_DYNAMIC: frozenset(
        {"n", "params", "exchange_index", "pair", "initial_values",
         "exchange_counts"}
    ),
    AdversaryClass.WEAK_STATIC: frozenset(
        {"n", "params", "exchange_index", "initial_values", "exchange_counts"}
    ),
    AdversaryClass.WEAK_CONTENT_OBLIVIOUS: frozenset(
        {"n", "params", "exchange_index", "pair", "exchange_counts"}
    ),
}


class AdversaryView:
    """Observation-class-restricted window onto the execution.

    Only fields granted to the class are present; anything else raises
    PermissionError, so a strategy written against a weaker class cannot
    silently read state it must not see.
    """

    __slots__ = ("_klass", "_fields")

    def __init__(self, klass: AdversaryClass, **fields):
        bad = set(fields) - _VISIBLE[klass]
        if bad:
            raise ConfigError(f"fields {sorted(bad)} not visible to {klass.value}")
        object.__setattr__(self, "_klass", klass)
        object.__setattr__(self, "_fields", fields)

    @property
    def adversary_class(self) -> AdversaryClass:
        return self._klass

    def __getattr__(self, name: str):
        fields = object.__getattribute__(self, "_fields")
        if name in fields:
            return fields[name]
        klass = object.__getattribute__(self, "_klass")
        raise PermissionError(f"{name!r} is not visible to a {klass.value} adversary")

    def has(self, name: str) -> bool:
        return name in self._fields


class Strategy:
    """Base adversary strategy.

    simulates_honest strategies hand their corrupted nodes back to the
    protocol: the engine keeps running the real machine from a restarted
    state, and present() is never invoked for them.
    """

    name = "strategy"
    adversary_class = AdversaryClass.FULL_DYNAMIC
    simulates_honest = False

    def setup(self, pop: Population, params: ProtocolParams,
              schedule: PhaseSchedule, rng) -> None:
        """Called once per run before any exchange."""

    def maybe_corrupt(self, view: AdversaryView, budget: int) -> Sequence[int]:
        """Node ids to corrupt now.  Must respect the remaining budget."""
        return ()

    def restart_value(self, node_id: int, initial_value: Value) -> Value:
        """Initial preference the corrupted node impersonates (honest sims)."""
        raise NotImplementedError

    def present(self, faulty_id: int, view: AdversaryView) -> PresentedState:
        """Forged view a corrupted node shows its partner (non-sims)."""
        raise NotImplementedError

    def present_machine(self, faulty_id: int, view: AdversaryView, machine: str,
                        partner_phases: int, partner_counter: int) -> PresentedState:
        """Forged sub-machine view for a combined-protocol partner."""
        raise NotImplementedError

    def prologue_value(self, faulty_id: int, view: AdversaryView) -> Value:
        """Value contributed to a partner's combined-protocol prologue."""
        raise NotImplementedError

    def notify_effect(self, faulty_id: int, effect: str | None,
                      machine: str = "single") -> None:
        """Engine feedback after each forged exchange.

        effect is 'cancel' if the honest partner blanked its value,
        'adopt' if it filled an empty value, None otherwise.
        """


class NoAdversary(Strategy):
    name = "none"
    adversary_class = AdversaryClass.FULL_STATIC


def _majority_value(initial_values: Sequence[Value]) -> Value:
    a = sum(1 for v in initial_values if v == Value.A)
    return Value.A if 2 * a >= len(initial_values) else Value.B


class StaticFlip(Strategy):
    """Corrupt f majority-preference nodes before exchange 1.

    The corrupted nodes run the real protocol machine with the opposite
    initial preference, so honest nodes cannot distinguish them from
    honest minority nodes.  With a tally gap below 2f this overturns the
    true majority.
    """

    name = "static-flip"
    adversary_class = AdversaryClass.FULL_STATIC
    simulates_honest = True

    def __init__(self):
        self._rng = None

    def setup(self, pop, params, schedule, rng):
        self._rng = rng

    def maybe_corrupt(self, view, budget):
        if budget <= 0:
            return ()
        majority = _majority_value(view.initial_values)
        candidates = [i for i, v in enumerate(view.initial_values) if v == majority]
        take = min(budget, len(candidates))
        picked = self._rng.choice(len(candidates), size=take, replace=False)
        return sorted(candidates[int(i)] for i in picked)

    def restart_value(self, node_id, initial_value):
        return opposite(initial_value)


class WeakFirstDual(Strategy):
    """Capture first-dual exchanges between two majority nodes.

    An exchange that is the first for both participants is corrupted as a
    pair (budget permitting) when both hold the majority preference; the
    captured nodes restart as honest-looking minority nodes.  Only pair
    identities, exchange counts, and the input assignment are read.
    """

    name = "weak-first-dual"
    adversary_class = AdversaryClass.WEAK_DYNAMIC
    simulates_honest = True

    def __init__(self):
        self.captured_pairs = 0
        self._target: Value | None = None

    def setup(self, pop, params, schedule, rng):
        self.captured_pairs = 0
        self._target = None

    def maybe_corrupt(self, view, budget):
        if budget < 2:
            return ()
        u, v = view.pair
        if view.exchange_counts[u] != 0 or view.exchange_counts[v] != 0:
            return ()
        majority = _majority_value(view.initial_values)
        if view.initial_values[u] != majority or view.initial_values[v] != majority:
            return ()
        self._target = opposite(majority)
        self.captured_pairs += 1
        return (u, v)

    def restart_value(self, node_id, initial_value):
        return self._target if self._target is not None else opposite(initial_value)


class ContentObliviousFirstDual(Strategy):
    """First-dual capture without reading any state content.

    The strategy sees only which nodes exchange, so it corrupts every
    first-dual pair it can afford; captured nodes restart with a fixed
    target preference chosen up front (the adversary's guess for the
    minority value).  Depending on the pair's true values, 2, 1, or 0 of
    the captured nodes actually flip sides.
    """

    name = "oblivious-first-dual"
    adversary_class = AdversaryClass.WEAK_CONTENT_OBLIVIOUS
    simulates_honest = True

    def __init__(self, target_value: Value = Value.B):
        self.target_value = target_value
        self.captured_pairs = 0

    def setup(self, pop, params, schedule, rng):
        self.captured_pairs = 0

    def maybe_corrupt(self, view, budget):
        if budget < 2:
            return ()
        u, v = view.pair
        if view.exchange_counts[u] != 0 or view.exchange_counts[v] != 0:
            return ()
        self.captured_pairs += 1
        return (u, v)

    def restart_value(self, node_id, initial_value):
        return self.target_value


class FullDynamicBooster(Strategy):
    """Minority impersonation saturating the per-phase damage budgets.

    Corrupts f current-majority nodes up front, then every corrupted node
    presents a phase-aligned, second-subphase, undecided minority state:
    during a partner's cancellation window that cancels a majority-valued
    partner, during duplication it donates the minority value to an empty
    partner, and during termination it inflates the minority's probe
    count.  Cancellations and donations are limited to one landed effect
    per corrupted node per phase of its own clock -- the f-per-phase
    influence the resilience analysis charges to the adversary.  An
    unbounded forger is not a meaningful benchmark: once D*f/n >~ 1 it
    annihilates the symmetric protocol's entire majority within a single
    cancellation phase, which no admissible tally gap survives.  Probe
    inflation stays unlimited because a sampling node meets faulty nodes
    at rate f/n regardless of what they present.
    """

    name = "full-booster"
    adversary_class = AdversaryClass.FULL_DYNAMIC
    simulates_honest = False

    def __init__(self):
        self._rng = None
        self._schedule = PhaseSchedule.SCFD_CYCLE
        # (faulty_id, machine) -> own phase index at the last landed effect
        self._spent_cancel: dict[tuple[int, str], int] = {}
        self._spent_adopt: dict[tuple[int, str], int] = {}
        # (faulty_id, machine) -> ("cancel"/"adopt", own phase) offered now
        self._offers: dict[tuple[int, str], tuple[str, int]] = {}

    def setup(self, pop, params, schedule, rng):
        self._rng = rng
        self._schedule = schedule
        self._spent_cancel.clear()
        self._spent_adopt.clear()
        self._offers.clear()

    def maybe_corrupt(self, view, budget):
        if budget <= 0 or view.exchange_index > 0:
            return ()
        majority = _majority_value(view.initial_values)
        candidates = [i for i, v in enumerate(view.initial_values) if v == majority]
        take = min(budget, len(candidates))
        picked = self._rng.choice(len(candidates), size=take, replace=False)
        return sorted(candidates[int(i)] for i in picked)

    def _forge(self, faulty_id: int, view: AdversaryView, partner_phases: int,
               partner_counter: int, machine: str, minority: Value) -> PresentedState:
        params: ProtocolParams = view.params
        # Present the phase the partner will be in after its own counter
        # advance this exchange, so the alignment gate always passes.
        phases = partner_phases + (1 if partner_counter + 1 >= params.D else 0)
        sched = self._schedule if machine == "single" else (
            PhaseSchedule.ACPD_CYCLE if machine == "acpd" else PhaseSchedule.SCFD_CYCLE)
        kind = phase_kind(phases, sched, params.gamma)
        my_phase = view.states[faulty_id].phases
        key = (faulty_id, machine)
        value = Value.EMPTY
        cloned = True
        if kind == PhaseKind.TERMINATION:
            value = minority
            cloned = False
        elif kind == PhaseKind.CANCELLATION:
            if self._spent_cancel.get(key) != my_phase:
                value = minority
                cloned = False
                self._offers[key] = ("cancel", my_phase)
        else:
            if self._spent_adopt.get(key) != my_phase:
                value = minority
                cloned = False
                self._offers[key] = ("adopt", my_phase)
        return PresentedState(
            value=value,
            saved=value,
            endf=False,
            failf=False,
            phases=phases,
            subphase=1,
            nonempty_at_phase_start=value != Value.EMPTY,
            cloned_this_phase=cloned,
        )

    def present(self, faulty_id, view):
        u, v = view.pair
        partner = v if u == faulty_id else u
        p = view.states[partner]
        t = view.tallies
        minority = Value.B if t.b <= t.a else Value.A
        return self._forge(faulty_id, view, p.phases, p.counter, "single", minority)

    def present_machine(self, faulty_id, view, machine, partner_phases, partner_counter):
        minority = opposite(_majority_value(view.initial_values))
        return self._forge(faulty_id, view, partner_phases, partner_counter,
                           machine, minority)

    def prologue_value(self, faulty_id, view):
        return opposite(_majority_value(view.initial_values))

    def notify_effect(self, faulty_id, effect, machine="single"):
        offer = self._offers.pop((faulty_id, machine), None)
        if effect is None or offer is None:
            return
        kind, my_phase = offer
        if kind == effect == "cancel":
            self._spent_cancel[(faulty_id, machine)] = my_phase
        elif kind == effect == "adopt":
            self._spent_adopt[(faulty_id, machine)] = my_phase


_REGISTRY = {
    "none": NoAdversary,
    "static-flip": StaticFlip,
    "weak-first-dual": WeakFirstDual,
    "oblivious-first-dual": ContentObliviousFirstDual,
    "full-booster": FullDynamicBooster,
}

STRATEGY_NAMES = tuple(_REGISTRY)


def make_strategy(name: str, **kwargs) -> Strategy:
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown adversary {name!r}; choose from {STRATEGY_NAMES}")
    return cls(**kwargs)
