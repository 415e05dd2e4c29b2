"""Serialized run loop: sample pair, build views, apply the joint
transition, update metrics, detect stop conditions.

Two interchangeable execution paths share one semantics and one RNG
discipline:

* the reference path runs the per-operation Python transitions on
  NodeState objects, supports arbitrary plug-in strategies, tracing, and
  per-exchange debug assertions;
* the fast path drives the numba kernels in _kernels.py for
  Monte-Carlo-scale runs with the built-in adversaries.

Both consume the identical chunked pair stream and identical pre-drawn
adversary/coin draws, so a run is bit-for-bit reproducible from its seed
on either path (a differential test enforces this).

Within one exchange both endpoints are updated from the two pre-exchange
states; every exchange mutates at most the two sampled nodes.  The loop
stops when every honest node has decided, when any honest node fails,
or when the exchange budget runs out.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels as K
from .acpd import acpd_transition
from .adversary import (
    AdversaryClass,
    AdversaryView,
    ContentObliviousFirstDual,
    FullDynamicBooster,
    NoAdversary,
    StaticFlip,
    Strategy,
    WeakFirstDual,
    _majority_value,
)
from .combined import (
    CombinedState,
    CombinedView,
    biased_coin,
    combined_transition,
    combined_view,
    probe_length,
    probe_threshold,
    run_phase_budget,
)
from .common import NodeView, PhaseKind, PhaseSchedule, subphase_of, view_of
from .core import (
    ConfigError,
    NodeState,
    Population,
    ProtocolParams,
    Tally,
    Value,
    tally,
)
from .scfd import scfd_transition
from .scheduler import PairStream, decode_pair, run_streams

PROTOCOLS = ("acpd", "scfd", "scfd-tf", "combined")

_SCHEDULE_OF = {
    "acpd": PhaseSchedule.ACPD_CYCLE,
    "scfd": PhaseSchedule.SCFD_CYCLE,
    "scfd-tf": PhaseSchedule.SCFD_TERMINATION_FIRST,
}

_SCHED_CODE = {
    PhaseSchedule.ACPD_CYCLE: K.SCHED_ACPD,
    PhaseSchedule.SCFD_CYCLE: K.SCHED_SCFD,
    PhaseSchedule.SCFD_TERMINATION_FIRST: K.SCHED_SCFD_TF,
}


class Outcome(Enum):
    DECIDED_A = "DecidedA"
    DECIDED_B = "DecidedB"
    MIXED = "Mixed"
    FAILED = "Failed"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass(frozen=True)
class PhaseTallyRow:
    """Honest tallies at first entry into a phase plus the phase's own
    attributed value changes (events are attributed to the phase of the
    node that acted, so overlapping phase windows cannot blur the rows)."""

    phase: int
    kind: PhaseKind
    a: int
    b: int
    empty: int
    delta_a: int
    delta_b: int
    span: int  # exchanges from first entry to last exit, -1 if still open


@dataclass(frozen=True)
class ExchangeRecord:
    """One scheduler event, for traces and replay checks."""

    index: int
    pair: tuple[int, int]
    roles: tuple[str, str]
    presented: tuple[str, str]
    changes: tuple[str, str]


@dataclass
class RunResult:
    outcome: Outcome
    decision_exchange: int          # 1-based exchange count at the last decision, -1 if none
    parallel_time: float            # decision_exchange / n (nan if no decision)
    exchanges_total: int
    seed: int
    final_tally: Tally
    per_phase_tallies: tuple[PhaseTallyRow, ...]
    drift_max: int
    protocol: str
    captured_pairs: int = 0
    unwrapped: np.ndarray | None = None
    trace: tuple[ExchangeRecord, ...] | None = None
    debug_state: dict | None = None


def unwrapped_counters(result: RunResult) -> np.ndarray:
    """Per-node lifetime exchange counts (not mod D), for drift checks."""
    assert result.unwrapped is not None
    return result.unwrapped


def default_max_exchanges(protocol: str, params: ProtocolParams) -> int:
    """Exchange budget keeping runs inside the counter-drift window."""
    base = math.ceil(8 * params.n * math.log(params.n) ** 3)
    if protocol == "combined":
        per_run = run_phase_budget(params) * params.D * params.n // 2
        return max(3 * base, math.ceil(3 * per_run * 1.2)) + params.n * probe_length(params.n)
    return base


def _hist_capacity(n: int, max_exchanges: int) -> int:
    mean = 2 * max_exchanges / n
    return int(mean + 12.0 * math.sqrt(mean + 1.0)) + 64


# =====================================================================
# Shared bookkeeping (mirrors the kernel registers exactly)
# =====================================================================

class _Trackers:
    def __init__(self, params: ProtocolParams, pop: Population, max_exchanges: int,
                 combined: bool):
        n = params.n
        self.params = params
        self.combined = combined
        self.a = self.b = self.undecided = self.dec_a = self.dec_b = 0
        self.faulty_count = len(pop.faulty)
        for i, s in enumerate(pop.states):
            if i in pop.faulty:
                continue
            if not combined:
                if s.value == Value.A:
                    self.a += 1
                elif s.value == Value.B:
                    self.b += 1
                if s.endf:
                    if s.value == Value.A:
                        self.dec_a += 1
                    else:
                        self.dec_b += 1
                else:
                    self.undecided += 1
            else:
                self.undecided += 1
        self.stop = K.STOP_RUNNING
        self.decision_exchange = -1
        self.captured_pairs = 0
        # drift tracking
        self.unwrapped = np.zeros(n, np.int64)
        self.hist = np.zeros(_hist_capacity(n, max_exchanges), np.int64)
        self.hist[0] = n
        self.drift_min = 0
        self.drift_maxc = 0
        self.drift_gap = 0
        self.hist_overflow = False
        # per-phase accounting
        lim = params.phases_limit
        self.delta_a = np.zeros(lim + 2, np.int64)
        self.delta_b = np.zeros(lim + 2, np.int64)
        self.phase_counts = np.zeros(lim + 3, np.int64)
        self.phase_counts[0] = n
        self.span_first = np.full(lim + 3, -1, np.int64)
        self.span_last = np.full(lim + 3, -1, np.int64)
        self.snap_a = np.zeros(lim + 3, np.int64)
        self.snap_b = np.zeros(lim + 3, np.int64)
        self.snap_e = np.zeros(lim + 3, np.int64)
        self.span_min = 0
        self.span_max = 0
        self.span_first[0] = 0
        self.snap_a[0] = self.a
        self.snap_b[0] = self.b
        self.snap_e[0] = (n - self.faulty_count) - self.a - self.b

    def bump(self, x: int) -> None:
        c = self.unwrapped[x]
        if c + 1 >= self.hist.shape[0]:
            self.hist_overflow = True
            self.unwrapped[x] = c + 1
            return
        self.hist[c] -= 1
        self.hist[c + 1] += 1
        self.unwrapped[x] = c + 1
        if c + 1 > self.drift_maxc:
            self.drift_maxc = c + 1
        m = self.drift_min
        while self.hist[m] == 0:
            m += 1
        self.drift_min = m
        gap = self.drift_maxc - m
        if gap > self.drift_gap:
            self.drift_gap = gap

    def phase_wrap(self, new_p: int, i: int) -> None:
        n = self.params.n
        self.phase_counts[new_p - 1] -= 1
        self.phase_counts[new_p] += 1
        if new_p > self.span_max:
            self.span_max = new_p
            self.span_first[new_p] = i
            self.snap_a[new_p] = self.a
            self.snap_b[new_p] = self.b
            self.snap_e[new_p] = (n - self.faulty_count) - self.a - self.b
        m = self.span_min
        while m < self.span_max and self.phase_counts[m] == 0:
            self.span_last[m] = i
            m += 1
        self.span_min = m

    def value_change(self, p: int, old: Value, new: Value) -> None:
        if old == Value.A:
            self.a -= 1
            self.delta_a[p] -= 1
        elif old == Value.B:
            self.b -= 1
            self.delta_b[p] -= 1
        if new == Value.A:
            self.a += 1
            self.delta_a[p] += 1
        elif new == Value.B:
            self.b += 1
            self.delta_b[p] += 1

    def decided(self, v: Value, i: int) -> None:
        self.undecided -= 1
        if v == Value.A:
            self.dec_a += 1
        else:
            self.dec_b += 1
        if self.dec_a > 0 and self.dec_b > 0:
            self.stop = K.STOP_MIXED
        elif self.undecided == 0:
            self.stop = K.STOP_DECIDED
            self.decision_exchange = i + 1

    def failed(self) -> None:
        self.stop = K.STOP_FAILED

    def remove_honest(self, s: NodeState, combined: bool) -> None:
        if not combined:
            if s.value == Value.A:
                self.a -= 1
            elif s.value == Value.B:
                self.b -= 1
            if s.endf:
                if s.value == Value.A:
                    self.dec_a -= 1
                else:
                    self.dec_b -= 1
            else:
                self.undecided -= 1
        else:
            self.undecided -= 1
        self.faulty_count += 1

    def honest_tally(self) -> Tally:
        n_honest = self.params.n - self.faulty_count
        return Tally(a=self.a, b=self.b, empty=n_honest - self.a - self.b,
                     decided_a=self.dec_a, decided_b=self.dec_b)

    def phase_rows(self, schedule: PhaseSchedule | None,
                   gamma: int) -> tuple[PhaseTallyRow, ...]:
        if schedule is None:
            return ()
        from .common import phase_kind

        rows = []
        for p in range(self.span_max + 1):
            span = -1
            if self.span_last[p] >= 0 and self.span_first[p] >= 0:
                span = int(self.span_last[p] - self.span_first[p] + 1)
            rows.append(PhaseTallyRow(
                phase=p,
                kind=phase_kind(p, schedule, gamma),
                a=int(self.snap_a[p]),
                b=int(self.snap_b[p]),
                empty=int(self.snap_e[p]),
                delta_a=int(self.delta_a[p]),
                delta_b=int(self.delta_b[p]),
                span=span,
            ))
        return tuple(rows)


def _outcome_of(trk: _Trackers, budget_hit: bool) -> Outcome:
    if trk.stop == K.STOP_MIXED:
        return Outcome.MIXED
    if trk.stop == K.STOP_FAILED:
        return Outcome.FAILED
    if trk.stop == K.STOP_DECIDED:
        return Outcome.DECIDED_A if trk.dec_a > 0 else Outcome.DECIDED_B
    assert budget_hit
    return Outcome.BUDGET_EXHAUSTED


# =====================================================================
# Reference path
# =====================================================================

def _advance_clock(state: NodeState, params: ProtocolParams, trk: _Trackers,
                   i: int, track_phases: bool) -> None:
    if state.phases >= params.phases_limit:
        return
    c = state.counter + 1
    if c >= params.D:
        c = 0
        state.phases += 1
        if track_phases:
            trk.phase_wrap(state.phases, i)
    state.counter = c


def _digest(view) -> str:
    if isinstance(view, NodeView):
        return (f"v={view.value}" f" s={view.saved} e={int(view.endf)}"
                f" p={view.phases}.{view.subphase}")
    return f"run={view.run_index}"


class _ReferenceRun:
    def __init__(self, protocol: str, params: ProtocolParams, pop: Population,
                 strategy: Strategy, seed: int, max_exchanges: int,
                 trace: str, debug: bool):
        self.protocol = protocol
        self.params = params
        self.pop = pop
        self.strategy = strategy
        self.seed = seed
        self.max_exchanges = max_exchanges
        self.debug = debug
        self.trace_mode = trace
        self.records: list[ExchangeRecord] = []
        self.combined = protocol == "combined"
        self.schedule = _SCHEDULE_OF.get(protocol)
        self.rules = acpd_transition if protocol == "acpd" else scfd_transition

        self.sched_rng, self.adv_rng, self.coin_rng = run_streams(seed)
        strategy.setup(pop, params, self.schedule or PhaseSchedule.SCFD_CYCLE,
                       self.adv_rng)
        self.initial_values = [s.value for s in pop.states]
        self.trk = _Trackers(params, pop, max_exchanges, self.combined)

        self.cstates: list[CombinedState] = []
        if self.combined:
            coin2 = [biased_coin(self.coin_rng, params) for _ in range(params.n)]
            coin3 = [biased_coin(self.coin_rng, params) for _ in range(params.n)]
            self.cstates = [
                CombinedState(original_value=s.value, coin2=coin2[i], coin3=coin3[i])
                for i, s in enumerate(pop.states)
            ]

        klass = strategy.adversary_class
        self.static = klass in (AdversaryClass.FULL_STATIC, AdversaryClass.WEAK_STATIC)
        if self.static:
            view = self._make_view(None, 0)
            self._apply_corruption(strategy.maybe_corrupt(view, pop.corruption_budget), 0)

    # -- views -------------------------------------------------------

    def _make_view(self, pair: tuple[int, int] | None, i: int) -> AdversaryView:
        klass = self.strategy.adversary_class
        fields: dict = {
            "n": self.params.n,
            "params": self.params,
            "exchange_index": i,
            "exchange_counts": self.trk.unwrapped,
        }
        if klass in (AdversaryClass.FULL_DYNAMIC, AdversaryClass.FULL_STATIC):
            fields["states"] = self.pop.states
            fields["tallies"] = self.trk.honest_tally()
            fields["initial_values"] = self.initial_values
            fields["schedule"] = self.schedule
        elif klass in (AdversaryClass.WEAK_DYNAMIC, AdversaryClass.WEAK_STATIC):
            fields["initial_values"] = self.initial_values
        if pair is not None and klass in (
            AdversaryClass.FULL_DYNAMIC,
            AdversaryClass.WEAK_DYNAMIC,
            AdversaryClass.WEAK_CONTENT_OBLIVIOUS,
        ):
            fields["pair"] = pair
        return AdversaryView(klass, **fields)

    def _apply_corruption(self, ids, i: int) -> None:
        ids = tuple(ids)
        if not ids:
            return
        assert len(ids) <= self.pop.corruption_budget, \
            "strategy exceeded its corruption budget"
        for x in ids:
            assert x not in self.pop.faulty, "strategy corrupted a faulty node twice"
        for x in ids:
            self.pop.faulty.add(x)
            self.pop.corruption_budget -= 1
            state = self.cstates[x] if self.combined else self.pop.states[x]
            if self.combined:
                self.trk.remove_honest(self.pop.states[x], True)
            else:
                self.trk.remove_honest(state, False)
            if self.strategy.simulates_honest:
                rv = self.strategy.restart_value(x, self.initial_values[x])
                if self.combined:
                    cs = self.cstates[x]
                    self.cstates[x] = CombinedState(
                        original_value=rv, coin2=cs.coin2, coin3=cs.coin3)
                else:
                    self.pop.states[x] = NodeState(value=rv)
        if self.strategy.adversary_class in (
            AdversaryClass.WEAK_DYNAMIC, AdversaryClass.WEAK_CONTENT_OBLIVIOUS
        ) and len(ids) == 2:
            self.trk.captured_pairs += 1

    # -- per-exchange processing --------------------------------------

    def _exchange_single(self, u: int, v: int, i: int) -> None:
        pop, trk, params = self.pop, self.trk, self.params
        strategy = self.strategy
        u_faulty = u in pop.faulty
        v_faulty = v in pop.faulty
        sim = strategy.simulates_honest
        full_view = None

        def presented(of_id: int, of_faulty: bool) -> NodeView:
            nonlocal full_view
            st = pop.states[of_id]
            if not of_faulty:
                return view_of(st, params)
            if sim:
                return view_of(st, params, failf_visible=False)
            if full_view is None:
                full_view = self._make_view((u, v), i)
            return strategy.present(of_id, full_view)

        # build presentations from pre-exchange state, for readers only
        pv_for_u = presented(v, v_faulty) if not (u_faulty and not sim) else None
        pv_for_v = presented(u, u_faulty) if not (v_faulty and not sim) else None

        changes = ["", ""]
        for idx, (x, x_faulty, pview, y, y_faulty) in enumerate(
            ((u, u_faulty, pv_for_u, v, v_faulty), (v, v_faulty, pv_for_v, u, u_faulty))
        ):
            st = pop.states[x]
            if x_faulty and not sim:
                _advance_clock(st, params, trk, i, True)
                continue
            pre_value, pre_endf, pre_failf = st.value, st.endf, st.failf
            if self.debug:
                st_copy = st.copy()
            ev = self.rules(st, pview, params, self.schedule)
            if ev is not None and ev.wrapped:
                trk.phase_wrap(st.phases, i)
            if not x_faulty:
                if st.value != pre_value:
                    trk.value_change(st.phases, pre_value, st.value)
                    changes[idx] = f"value:{pre_value}->{st.value}"
                if st.endf and not pre_endf:
                    trk.decided(st.value, i)
                    changes[idx] = f"decided:{st.value}"
                if st.failf and not pre_failf:
                    trk.failed()
                    changes[idx] = "failed"
            if y_faulty and not sim:
                effect = None
                if pre_value != Value.EMPTY and st.value == Value.EMPTY:
                    effect = "cancel"
                elif (pre_value == Value.EMPTY and st.value != Value.EMPTY
                      and not (st.endf and not pre_endf)):
                    effect = "adopt"
                strategy.notify_effect(y, effect, "single")
            if self.debug:
                st.check_invariants(params)
                if pre_endf:
                    assert st.value == pre_value, "decided value changed"
                # re-run from the same pre-views: transitions are pure in
                # (pre_self, pre_partner), so a second evaluation agrees
                again = st_copy
                self.rules(again, pview, params, self.schedule)
                assert again == st, "endpoint update not order-independent"
        if self.trace_mode != "off":
            self._record(i, u, v, pv_for_v, pv_for_u, changes)

    def _exchange_combined(self, u: int, v: int, i: int) -> None:
        pop, trk, params = self.pop, self.trk, self.params
        strategy = self.strategy
        sim = strategy.simulates_honest
        u_faulty = u in pop.faulty
        v_faulty = v in pop.faulty
        full_view = None

        def presented(of_id: int, of_faulty: bool, reader_cs: CombinedState) -> CombinedView:
            nonlocal full_view
            if not of_faulty or sim:
                return combined_view(self.cstates[of_id], params)
            if full_view is None:
                full_view = self._make_view((u, v), i)
            acpd_view = strategy.present_machine(
                of_id, full_view, "acpd",
                reader_cs.sub_acpd.phases, reader_cs.sub_acpd.counter)
            scfd_view = strategy.present_machine(
                of_id, full_view, "scfd",
                reader_cs.sub_scfd.phases, reader_cs.sub_scfd.counter)
            return CombinedView(
                run_index=reader_cs.run_index,
                prologue_value=strategy.prologue_value(of_id, full_view),
                acpd=acpd_view,
                scfd=scfd_view,
            )

        pv_for_u = (presented(v, v_faulty, self.cstates[u])
                    if not (u_faulty and not sim) else None)
        pv_for_v = (presented(u, u_faulty, self.cstates[v])
                    if not (v_faulty and not sim) else None)

        for x, x_faulty, pview, y, y_faulty in (
            (u, u_faulty, pv_for_u, v, v_faulty),
            (v, v_faulty, pv_for_v, u, u_faulty),
        ):
            if x_faulty and not sim:
                _advance_clock(pop.states[x], params, trk, i, False)
                continue
            cs = self.cstates[x]
            pre_a_val, pre_a_end = cs.sub_acpd.value, cs.sub_acpd.endf
            pre_s_val, pre_s_end = cs.sub_scfd.value, cs.sub_scfd.endf
            pre_endf, pre_failf = cs.endf, cs.failf
            combined_transition(cs, pview, params)
            if not x_faulty:
                if cs.endf and not pre_endf:
                    trk.decided(cs.value, i)
                if cs.failf and not pre_failf:
                    trk.failed()
            if y_faulty and not sim:
                for machine, pre_val, pre_end, st in (
                    ("acpd", pre_a_val, pre_a_end, cs.sub_acpd),
                    ("scfd", pre_s_val, pre_s_end, cs.sub_scfd),
                ):
                    effect = None
                    if pre_val != Value.EMPTY and st.value == Value.EMPTY:
                        effect = "cancel"
                    elif (pre_val == Value.EMPTY and st.value != Value.EMPTY
                          and not (st.endf and not pre_end)):
                        effect = "adopt"
                    strategy.notify_effect(y, effect, machine)

    def _record(self, i, u, v, view_u, view_v, changes) -> None:
        def role(x):
            if x not in self.pop.faulty:
                return "honest"
            return "faulty-sim" if self.strategy.simulates_honest else "faulty"

        rec = ExchangeRecord(
            index=i,
            pair=(u, v),
            roles=(role(u), role(v)),
            presented=(
                _digest(view_u) if view_u is not None else "-",
                _digest(view_v) if view_v is not None else "-",
            ),
            changes=(changes[0], changes[1]),
        )
        if self.trace_mode == "full":
            self.records.append(rec)
        else:  # on-failure: ring buffer
            self.records.append(rec)
            if len(self.records) > 4096:
                self.records.pop(0)

    # -- main loop -----------------------------------------------------

    def execute(self) -> RunResult:
        trk = self.trk
        dynamic = not self.static
        stream = PairStream(self.sched_rng, self.params.n)
        i = 0
        while trk.stop == K.STOP_RUNNING and i < self.max_exchanges:
            us, vs = stream.next_chunk()
            m = min(us.shape[0], self.max_exchanges - i)
            for j in range(m):
                u, v = decode_pair(int(us[j]), int(vs[j]))
                if dynamic:
                    view = self._make_view((u, v), i)
                    ids = self.strategy.maybe_corrupt(view, self.pop.corruption_budget)
                    if ids:
                        self._apply_corruption(ids, i)
                if i == 0:
                    # phase-0 entry snapshot reflects any exchange-0 corruption
                    trk.snap_a[0] = trk.a
                    trk.snap_b[0] = trk.b
                    trk.snap_e[0] = (self.params.n - trk.faulty_count) - trk.a - trk.b
                trk.bump(u)
                trk.bump(v)
                if self.combined:
                    self._exchange_combined(u, v, i)
                else:
                    self._exchange_single(u, v, i)
                i += 1
                if trk.stop != K.STOP_RUNNING:
                    break
        return self._result(i)

    def _result(self, exchanges: int) -> RunResult:
        trk = self.trk
        if trk.hist_overflow:
            raise RuntimeError("drift histogram overflow; raise max_exchanges margin")
        outcome = _outcome_of(trk, exchanges >= self.max_exchanges)
        if self.combined:
            a = b = e = 0
            for x, cs in enumerate(self.cstates):
                if x in self.pop.faulty:
                    continue
                if cs.endf and cs.value == Value.A:
                    a += 1
                elif cs.endf and cs.value == Value.B:
                    b += 1
                else:
                    e += 1
            final = Tally(a=a, b=b, empty=e, decided_a=a, decided_b=b)
        else:
            final = tally(self.pop)
        dec = trk.decision_exchange
        keep_trace = self.trace_mode == "full" or (
            self.trace_mode == "on-failure"
            and outcome in (Outcome.FAILED, Outcome.MIXED)
        )
        if isinstance(self.strategy, (WeakFirstDual, ContentObliviousFirstDual)):
            captured = self.strategy.captured_pairs
        else:
            captured = trk.captured_pairs
        return RunResult(
            outcome=outcome,
            decision_exchange=dec,
            parallel_time=(dec / self.params.n) if dec > 0 else float("nan"),
            exchanges_total=exchanges,
            seed=self.seed,
            final_tally=final,
            per_phase_tallies=trk.phase_rows(
                None if self.combined else self.schedule, self.params.gamma),
            drift_max=int(trk.drift_gap),
            protocol=self.protocol,
            captured_pairs=captured,
            unwrapped=trk.unwrapped,
            trace=tuple(self.records) if keep_trace else None,
        )


# =====================================================================
# Fast path
# =====================================================================

_ADV_CODE = {
    NoAdversary: K.ADV_NONE,
    StaticFlip: K.ADV_NONE,          # corruption applied before the loop
    FullDynamicBooster: K.ADV_BOOSTER,
    WeakFirstDual: K.ADV_WEAK_FIRST_DUAL,
    ContentObliviousFirstDual: K.ADV_OBLIVIOUS_FIRST_DUAL,
}


def _fast_supported(strategy: Strategy) -> bool:
    return type(strategy) in _ADV_CODE


class _FastRun:
    def __init__(self, protocol: str, params: ProtocolParams, pop: Population,
                 strategy: Strategy, seed: int, max_exchanges: int):
        self.protocol = protocol
        self.params = params
        self.pop = pop
        self.strategy = strategy
        self.seed = seed
        self.max_exchanges = max_exchanges
        self.combined = protocol == "combined"
        self.schedule = _SCHEDULE_OF.get(protocol)

        self.sched_rng, self.adv_rng, self.coin_rng = run_streams(seed)
        strategy.setup(pop, params, self.schedule or PhaseSchedule.SCFD_CYCLE,
                       self.adv_rng)
        self.initial_values = [s.value for s in pop.states]
        n = params.n

        # up-front corruption: static classes at exchange 0, and the
        # booster (whose only corruption happens at exchange index 0)
        pre_ids: tuple[int, ...] = ()
        if isinstance(strategy, (StaticFlip, NoAdversary)):
            view = AdversaryView(
                strategy.adversary_class,
                n=n, params=params, exchange_index=0,
                exchange_counts=np.zeros(n, np.int64),
                states=pop.states, tallies=tally(pop),
                initial_values=self.initial_values, schedule=self.schedule,
            )
            pre_ids = tuple(strategy.maybe_corrupt(view, pop.corruption_budget))
        elif isinstance(strategy, FullDynamicBooster):
            view = AdversaryView(
                AdversaryClass.FULL_DYNAMIC,
                n=n, params=params, exchange_index=0, pair=(0, 1),
                exchange_counts=np.zeros(n, np.int64),
                states=pop.states, tallies=tally(pop),
                initial_values=self.initial_values, schedule=self.schedule,
            )
            pre_ids = tuple(strategy.maybe_corrupt(view, pop.corruption_budget))
        assert len(pre_ids) <= pop.corruption_budget
        for x in pre_ids:
            pop.faulty.add(x)
            pop.corruption_budget -= 1
            if strategy.simulates_honest:
                rv = strategy.restart_value(x, self.initial_values[x])
                pop.states[x] = NodeState(value=rv)

        self.trk = _Trackers(params, pop, max_exchanges, self.combined)
        self._build_arrays()

    def _build_arrays(self) -> None:
        pop, params = self.pop, self.params
        n = params.n
        sim = self.strategy.simulates_honest
        self.faulty = np.zeros(n, np.uint8)
        self.fsim = np.zeros(n, np.uint8)
        for x in pop.faulty:
            self.faulty[x] = 1
            if sim:
                self.fsim[x] = 1
        self.init_vals = np.array([int(v) for v in self.initial_values], np.int8)
        self.regs = np.zeros(K.N_REGS, np.int64)
        trk = self.trk
        self.regs[K._R_A] = trk.a
        self.regs[K._R_B] = trk.b
        self.regs[K._R_UNDECIDED] = trk.undecided
        self.regs[K._R_DEC_A] = trk.dec_a
        self.regs[K._R_DEC_B] = trk.dec_b
        self.regs[K._R_BUDGET] = pop.corruption_budget
        self.regs[K._R_DEC_EX] = -1
        self.regs[K._R_FAULTY] = len(pop.faulty)

        if not self.combined:
            self.val = np.array([int(s.value) for s in pop.states], np.int8)
            self.sav = np.array([int(s.saved) for s in pop.states], np.int8)
            self.endf = np.array([s.endf for s in pop.states], np.uint8)
            self.failf = np.array([s.failf for s in pop.states], np.uint8)
            self.phases = np.array([s.phases for s in pop.states], np.int64)
            self.counter = np.array([s.counter for s in pop.states], np.int64)
            self.pa = np.array([s.probe_a for s in pop.states], np.int64)
            self.pb = np.array([s.probe_b for s in pop.states], np.int64)
            self.ps = np.array([s.probe_seen for s in pop.states], np.int64)
            self.canc = np.array([s.cancelled_this_phase for s in pop.states], np.uint8)
            self.adopt = np.array([s.adopted_this_phase for s in pop.states], np.uint8)
            self.cloned = np.array([s.cloned_this_phase for s in pop.states], np.uint8)
            self.ne = np.array([s.nonempty_at_phase_start for s in pop.states], np.uint8)
            self.spent_cancel = np.full(n, -1, np.int64)
            self.spent_adopt = np.full(n, -1, np.int64)
        else:
            coin2 = np.array([biased_coin(self.coin_rng, params) for _ in range(n)],
                             np.uint8)
            coin3 = np.array([biased_coin(self.coin_rng, params) for _ in range(n)],
                             np.uint8)
            self.coin2, self.coin3 = coin2, coin3
            self.counter = np.zeros(n, np.int64)
            self.phases = np.zeros(n, np.int64)
            self.mval = np.full((2, n), K.VAL_EMPTY, np.int8)
            self.msav = np.full((2, n), K.VAL_EMPTY, np.int8)
            self.mendf = np.zeros((2, n), np.uint8)
            self.mpa = np.zeros((2, n), np.int64)
            self.mpb = np.zeros((2, n), np.int64)
            self.mps = np.zeros((2, n), np.int64)
            self.mcanc = np.zeros((2, n), np.uint8)
            self.madopt = np.zeros((2, n), np.uint8)
            self.mcloned = np.zeros((2, n), np.uint8)
            self.mne = np.zeros((2, n), np.uint8)
            self.z0 = np.full(n, -1, np.int8)
            self.zca = np.zeros(n, np.int64)
            self.zcb = np.zeros(n, np.int64)
            self.zseen = np.zeros(n, np.int64)
            self.run_idx = np.zeros(n, np.int8)
            self.orig = np.array([int(s.value) for s in pop.states], np.int8)
            self.xdec = np.full((3, n), -1, np.int8)
            self.ydec = np.full((3, n), -1, np.int8)
            self.cval = np.full(n, K.VAL_EMPTY, np.int8)
            self.cendf = np.zeros(n, np.uint8)
            self.cfailf = np.zeros(n, np.uint8)
            self.spent_cancel = np.full((2, n), -1, np.int64)
            self.spent_adopt = np.full((2, n), -1, np.int64)

    def execute(self) -> RunResult:
        params = self.params
        n = params.n
        trk = self.trk
        adv = _ADV_CODE[type(self.strategy)]
        maj = int(_majority_value(self.initial_values))
        target = int(getattr(self.strategy, "target_value", Value.B))
        stream = PairStream(self.sched_rng, n)
        done = 0
        regs = self.regs
        while regs[K._R_STOP] == K.STOP_RUNNING and done < self.max_exchanges:
            us, vs = stream.next_chunk()
            m = min(us.shape[0], self.max_exchanges - done)
            if not self.combined:
                consumed = K.protocol_kernel(
                    us[:m], vs[:m], done, n,
                    K.PROTO_ACPD if self.protocol == "acpd" else K.PROTO_SCFD,
                    _SCHED_CODE[self.schedule], params.gamma, params.D,
                    params.psi, params.sigma1, params.sigma2,
                    params.phases_limit,
                    adv, maj, target, self.init_vals,
                    self.val, self.sav, self.endf, self.failf, self.phases,
                    self.counter, self.pa, self.pb, self.ps,
                    self.canc, self.adopt, self.cloned, self.ne,
                    self.faulty, self.fsim, trk.unwrapped,
                    self.spent_cancel, self.spent_adopt,
                    trk.hist, trk.delta_a, trk.delta_b, trk.phase_counts,
                    trk.span_first, trk.span_last,
                    trk.snap_a, trk.snap_b, trk.snap_e,
                    regs)
            else:
                consumed = K.combined_kernel(
                    us[:m], vs[:m], done, n,
                    params.gamma, params.D, params.psi, params.sigma1,
                    params.sigma2, run_phase_budget(params),
                    probe_length(n), probe_threshold(params),
                    adv, maj, target, self.init_vals,
                    self.counter, self.phases,
                    self.mval, self.msav, self.mendf,
                    self.mpa, self.mpb, self.mps,
                    self.mcanc, self.madopt, self.mcloned, self.mne,
                    self.z0, self.zca, self.zcb, self.zseen, self.run_idx,
                    self.orig, self.xdec, self.ydec, self.cval, self.cendf,
                    self.cfailf, self.coin2, self.coin3,
                    self.faulty, self.fsim, trk.unwrapped,
                    self.spent_cancel, self.spent_adopt,
                    trk.hist, regs)
            done += int(consumed)
        return self._result(done)

    def _result(self, exchanges: int) -> RunResult:
        trk = self.trk
        regs = self.regs
        if regs[K._R_HIST_OVF]:
            raise RuntimeError("drift histogram overflow; raise max_exchanges margin")
        # fold kernel registers back into the tracker for shared reporting
        trk.a = int(regs[K._R_A])
        trk.b = int(regs[K._R_B])
        trk.undecided = int(regs[K._R_UNDECIDED])
        trk.dec_a = int(regs[K._R_DEC_A])
        trk.dec_b = int(regs[K._R_DEC_B])
        trk.stop = int(regs[K._R_STOP])
        trk.decision_exchange = int(regs[K._R_DEC_EX])
        trk.drift_gap = int(regs[K._R_DRIFT_GAP])
        trk.faulty_count = int(regs[K._R_FAULTY])
        trk.span_max = int(regs[K._R_SPAN_MAX])
        outcome = _outcome_of(trk, exchanges >= self.max_exchanges)
        if self.combined:
            a = b = e = 0
            for x in range(self.params.n):
                if self.faulty[x]:
                    continue
                if self.cendf[x] and self.cval[x] == K.VAL_A:
                    a += 1
                elif self.cendf[x] and self.cval[x] == K.VAL_B:
                    b += 1
                else:
                    e += 1
            final = Tally(a=a, b=b, empty=e, decided_a=a, decided_b=b)
        else:
            faulty = self.faulty
            a = b = e = da = db = 0
            for x in range(self.params.n):
                if faulty[x]:
                    continue
                if self.val[x] == K.VAL_A:
                    a += 1
                elif self.val[x] == K.VAL_B:
                    b += 1
                else:
                    e += 1
                if self.endf[x]:
                    if self.val[x] == K.VAL_A:
                        da += 1
                    else:
                        db += 1
            final = Tally(a=a, b=b, empty=e, decided_a=da, decided_b=db)
        dec = trk.decision_exchange
        return RunResult(
            outcome=outcome,
            decision_exchange=dec,
            parallel_time=(dec / self.params.n) if dec > 0 else float("nan"),
            exchanges_total=exchanges,
            seed=self.seed,
            final_tally=final,
            per_phase_tallies=trk.phase_rows(
                None if self.combined else self.schedule, self.params.gamma),
            drift_max=int(trk.drift_gap),
            protocol=self.protocol,
            captured_pairs=int(regs[K._R_CAPTURED]),
            unwrapped=trk.unwrapped,
        )


# =====================================================================
# Entry point
# =====================================================================

def run(protocol: str, params: ProtocolParams, pop: Population,
        strategy: Strategy | None = None, seed: int = 0,
        max_exchanges: int | None = None, engine: str = "auto",
        trace: str = "off", debug: bool = False) -> RunResult:
    """Execute one run and return its result.

    The population is copied; the caller's object is never mutated.  With
    engine="auto" the compiled path is used whenever the strategy is one
    of the built-ins and no trace or debug instrumentation is requested.
    """
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}; choose from {PROTOCOLS}")
    if trace not in ("off", "on-failure", "full"):
        raise ConfigError(f"unknown trace mode {trace!r}")
    if pop.n != params.n:
        raise ConfigError(f"population size {pop.n} != params.n {params.n}")
    params.validate()
    strategy = strategy or NoAdversary()
    f = pop.f
    if f > 0 and f >= pop.n:
        raise ConfigError("cannot corrupt the whole population")
    if protocol != "combined" and not any(
        not s.endf for i, s in enumerate(pop.states) if i not in pop.faulty
    ):
        raise ConfigError("population has no undecided honest node to run")
    if f > params.n // params.c_f:
        msg = (f"f={f} exceeds n/c_f={params.n // params.c_f} "
               f"for profile {params.profile_name}")
        if params.profile_name.startswith("theory"):
            raise ConfigError(msg)
        warnings.warn(msg)
    if max_exchanges is None:
        max_exchanges = default_max_exchanges(protocol, params)

    pop = pop.copy()
    use_fast = engine == "fast" or (
        engine == "auto" and _fast_supported(strategy)
        and trace == "off" and not debug
    )
    if engine == "fast" and not _fast_supported(strategy):
        raise ConfigError(f"strategy {strategy.name!r} has no compiled support")
    if use_fast:
        return _FastRun(protocol, params, pop, strategy, seed, max_exchanges).execute()
    return _ReferenceRun(protocol, params, pop, strategy, seed, max_exchanges,
                         trace, debug).execute()
