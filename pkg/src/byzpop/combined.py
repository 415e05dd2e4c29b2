"""Combined protocol: bias probe, local biased coin, three paired runs.

Every node runs the asymmetric and the symmetric machine side by side,
three times in a row.  A prologue of ceil(ln^3 n) exchanges estimates
whether the initial bias is large (probe flag 1) or small (0).  Runs 2
and 3 re-seed the machines from the node's original value with a small
random conversion toward A resp. toward B; comparing the asymmetric
machine's three decisions tells the node which machine to trust.

Run boundaries run on each node's own clock: a run lasts exactly the
phase-limit budget, after which both machines' decisions (or lack
thereof) are recorded and fresh machines start the next run.  An
undecided sub-run is a normal outcome here, not a node failure -- an
empty decision slot only fails the node if the final decision rule
actually needs it.  Nodes in different runs treat each other as
phase-mismatched, so their machines advance counters but exchange no
values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .acpd import acpd_transition
from .common import NodeView, PhaseSchedule, is_frozen, view_of
from .core import NodeState, ProtocolParams, Value
from .scfd import scfd_transition


class DecisionUnavailable(RuntimeError):
    """A decision slot needed by the final rule is empty (sub-run failed)."""


def run_phase_budget(params: ProtocolParams) -> int:
    """Fixed per-run phase budget of the combined protocol.

    Long enough for every intended sub-decision (the symmetric machine at
    unit gap and the asymmetric machine at the coin-induced gap both
    decide by ~30 phases at desk scale; frozen from the pilot sweep), and
    never beyond the single-protocol abort horizon.
    """
    return min(params.phases_limit, math.ceil(8.0 * math.log(params.n)))


# =====================================================================
# Probe / coin arithmetic
# =====================================================================

def probe_length(n: int) -> int:
    """Number of prologue exchanges used for the bias probe."""
    return math.ceil(math.log(n) ** 3)


def probe_threshold(params: ProtocolParams) -> int:
    """Count difference at which the probe flags a large bias."""
    return math.ceil(params.bias_c * math.log(params.n))


def coin_level(n: int, bias_c: float) -> int:
    """Heads-in-a-row target L of the conversion coin; P(1) = 2**-L."""
    return max(0, math.ceil(math.log2(math.sqrt((1.0 / bias_c) ** 2 * n * math.log(n)))))


def biased_coin(rng, params: ProtocolParams) -> int:
    """Toss fair bits until L heads in a row (output 1) or a tail (0).

    The running heads counter never exceeds L, so the coin needs only
    O(log log n) bits of local state.  P(1) is exactly 2**-L.
    """
    L = coin_level(params.n, params.bias_c)
    counter = 0
    while counter < L:
        if int(rng.integers(0, 2)) == 0:
            return 0
        counter += 1
    return 1


def apply_bias(original: Value, run_index: int, coin: int) -> Value:
    """Starting value of a sub-run: run 2 converts B->A, run 3 converts A->B."""
    if run_index == 1:
        return original
    if run_index == 2:
        return Value.A if (original == Value.B and coin == 1) else original
    if run_index == 3:
        return Value.B if (original == Value.A and coin == 1) else original
    raise ValueError(f"run index must be 1, 2, or 3, got {run_index}")


def combined_decide(z0: int, x: list[Value | None], y: list[Value | None]) -> Value:
    """Final decision rule over the per-run decisions.

    x[i] / y[i] hold the asymmetric / symmetric machine's decision of run
    i+1 (None if that sub-run made no decision).  Raises
    DecisionUnavailable if a slot the rule needs is empty.
    """
    def need(slot: Value | None, name: str) -> Value:
        if slot is None:
            raise DecisionUnavailable(f"needed decision {name} is empty")
        return slot

    if z0 == 1:
        return need(x[0], "x1")
    x2 = need(x[1], "x2")
    x3 = need(x[2], "x3")
    if x2 == x3:
        return need(x[0], "x1")
    return need(y[0], "y1")


# =====================================================================
# Per-node combined state and transition
# =====================================================================

def _fresh_machine(start: Value) -> NodeState:
    return NodeState(value=start)


@dataclass
class CombinedState:
    """Per-node bookkeeping for the combined protocol.

    run_index 0 is the probe prologue, 1..3 the paired runs, 4 means all
    runs finished (final value/endf/failf hold the node's answer).
    """

    original_value: Value
    coin2: int
    coin3: int
    z0: int | None = None
    z0_count_a: int = 0
    z0_count_b: int = 0
    z0_seen: int = 0
    run_index: int = 0
    sub_acpd: NodeState = field(default_factory=NodeState)
    sub_scfd: NodeState = field(default_factory=NodeState)
    x: list[Value | None] = field(default_factory=lambda: [None, None, None])
    y: list[Value | None] = field(default_factory=lambda: [None, None, None])
    value: Value = Value.EMPTY
    endf: bool = False
    failf: bool = False

    def start_run(self, run_index: int) -> None:
        coin = self.coin2 if run_index == 2 else self.coin3
        start = apply_bias(self.original_value, run_index, coin)
        self.run_index = run_index
        self.sub_acpd = _fresh_machine(start)
        self.sub_scfd = _fresh_machine(start)


@dataclass(frozen=True)
class CombinedView:
    """What a partner's combined node presents."""

    run_index: int
    prologue_value: Value          # contributed during the observer's prologue
    acpd: NodeView
    scfd: NodeView


_SUB_PARAMS_CACHE: dict[int, ProtocolParams] = {}


def _sub_params(params: ProtocolParams) -> ProtocolParams:
    """Params with the phase horizon shortened to the per-run budget."""
    key = id(params)
    cached = _SUB_PARAMS_CACHE.get(key)
    if cached is None:
        from dataclasses import replace

        cached = replace(params, phases_limit=run_phase_budget(params))
        _SUB_PARAMS_CACHE[key] = cached
    return cached


def combined_view(cs: CombinedState, params: ProtocolParams) -> CombinedView:
    sub_params = _sub_params(params)
    return CombinedView(
        run_index=cs.run_index,
        prologue_value=cs.original_value,
        acpd=view_of(cs.sub_acpd, sub_params, failf_visible=False),
        scfd=view_of(cs.sub_scfd, sub_params, failf_visible=False),
    )


def z0_probe_step(cs: CombinedState, partner_value: Value, params: ProtocolParams) -> CombinedState:
    """Consume one prologue observation; finalize the flag when enough seen."""
    assert cs.z0 is None and cs.run_index == 0
    cs.z0_seen += 1
    if partner_value == Value.A:
        cs.z0_count_a += 1
    elif partner_value == Value.B:
        cs.z0_count_b += 1
    if cs.z0_seen >= probe_length(params.n):
        diff = abs(cs.z0_count_a - cs.z0_count_b)
        cs.z0 = 1 if diff >= probe_threshold(params) else 0
        cs.start_run(1)
    return cs


def _machine_settled(machine: NodeState, params: ProtocolParams) -> bool:
    # A run occupies a fixed budget of phases on the node's own clock.
    # Decided machines idle out the rest of the budget, so every node
    # crosses the run boundary at the same local tick and the next run's
    # machine clocks stay aligned across nodes up to ordinary counter
    # drift.  Ending runs at the (variable) decision time instead was
    # measured to desynchronize runs 2 and 3 beyond repair.
    return machine.phases >= run_phase_budget(params)


def combined_transition(cs: CombinedState, partner: CombinedView,
                        params: ProtocolParams) -> None:
    """Update one endpoint's combined state from the pre-exchange pair.

    Both sub-machines advance on every exchange of their owner; the value
    rules only see the partner's corresponding sub-machine when the two
    nodes are in the same run.  Sub-machines never propagate failure: a
    machine that hits the phase limit simply leaves its decision slot
    empty.
    """
    if cs.endf or cs.failf:
        return
    if cs.run_index == 0:
        z0_probe_step(cs, partner.prologue_value, params)
        return

    aligned = partner.run_index == cs.run_index
    # A mismatched run presents as a phase-mismatched partner: counters
    # advance, no values move.  phases=-1 can never equal a real phase.
    acpd_partner = partner.acpd if aligned else _MISMATCH
    scfd_partner = partner.scfd if aligned else _MISMATCH
    sub_params = _sub_params(params)
    if not is_frozen(cs.sub_acpd, sub_params):
        acpd_transition(cs.sub_acpd, acpd_partner, sub_params, PhaseSchedule.ACPD_CYCLE)
    if not is_frozen(cs.sub_scfd, sub_params):
        scfd_transition(cs.sub_scfd, scfd_partner, sub_params, PhaseSchedule.SCFD_CYCLE)

    if _machine_settled(cs.sub_acpd, params) and _machine_settled(cs.sub_scfd, params):
        r = cs.run_index
        cs.x[r - 1] = cs.sub_acpd.value if cs.sub_acpd.endf else None
        cs.y[r - 1] = cs.sub_scfd.value if cs.sub_scfd.endf else None
        if r < 3:
            cs.start_run(r + 1)
            return
        cs.run_index = 4
        try:
            cs.value = combined_decide(cs.z0, cs.x, cs.y)
            cs.endf = True
        except DecisionUnavailable:
            cs.failf = True


_MISMATCH = NodeView(
    value=Value.EMPTY,
    saved=Value.EMPTY,
    endf=False,
    failf=False,
    phases=-1,
    subphase=0,
    nonempty_at_phase_start=False,
    cloned_this_phase=False,
)
