"""Machinery shared by all three protocols.

Local-counter and phase bookkeeping, subphase arithmetic, the phase-kind
schedules, phase-entry snapshotting, failure propagation, and the
termination sampling check.

A note on exchange discipline: both endpoints of an exchange are updated
from the two *pre-exchange* states.  Each endpoint first advances its own
counter, then evaluates the phase rules against the partner's presented
(pre-exchange) view.  The counter advance is unconditional for live nodes;
the value rules are gated on endf and on phase alignment.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

from .core import NodeState, ProtocolParams, Value


class PhaseKind(IntEnum):
    CANCELLATION = 0
    TERMINATION = 1
    DUPLICATION = 2


class PhaseSchedule(Enum):
    """Which kind a given phase index has.

    ACPD_CYCLE repeats (gamma x cancellation, termination, duplication).
    SCFD_CYCLE repeats (cancellation, termination, duplication).
    SCFD_TERMINATION_FIRST runs one termination phase, then SCFD_CYCLE;
    it is the variant for near-unanimous inputs.
    """

    ACPD_CYCLE = "acpd-cycle"
    SCFD_CYCLE = "scfd-cycle"
    SCFD_TERMINATION_FIRST = "scfd-termination-first"


def phase_kind(phase_index: int, schedule: PhaseSchedule, gamma: int = 1) -> PhaseKind:
    if phase_index < 0:
        raise ValueError(f"phase index must be >= 0, got {phase_index}")
    if schedule is PhaseSchedule.ACPD_CYCLE:
        j = phase_index % (gamma + 2)
        if j < gamma:
            return PhaseKind.CANCELLATION
        return PhaseKind.TERMINATION if j == gamma else PhaseKind.DUPLICATION
    if schedule is PhaseSchedule.SCFD_CYCLE:
        return PhaseKind(phase_index % 3)
    # termination-first: index 0 is termination, then the normal cycle
    if phase_index == 0:
        return PhaseKind.TERMINATION
    return PhaseKind((phase_index - 1) % 3)


def subphase_of(counter: int, D: int) -> int:
    """Which third of the phase a counter value falls in (0, 1, or 2)."""
    assert 0 <= counter < D and D % 3 == 0
    return counter // (D // 3)


@dataclass(frozen=True)
class PhaseEvent:
    """What advance_counter did on one exchange."""

    wrapped: bool
    new_phase: int
    kind: PhaseKind
    subphase: int
    limit_reached: bool


@dataclass(frozen=True)
class NodeView:
    """The slice of a partner's state an endpoint may read.

    Value content (value, saved, endf, failf) is pre-exchange; the clock
    fields (phases, subphase) and the phase-entry snapshot fields are the
    partner's deterministic post-advance projection, because both
    endpoints advance their counters within the exchange.  Projecting the
    partner's clock keeps every paired predicate exactly symmetric: the
    two sides of a symmetric cancellation always fire together, and a
    donor consumes its once-per-phase clone exactly when some recipient
    adopts.  saved is likewise the snapshot belonging to the projected
    phase ("the value the partner had when it entered the phase").

    Honest partners present their real state; faulty partners present
    whatever their strategy forges, with failf pinned to False -- a single
    faulty node presenting failure would trivially cascade-kill the
    population.
    """

    value: Value
    saved: Value
    endf: bool
    failf: bool
    phases: int
    subphase: int
    nonempty_at_phase_start: bool
    cloned_this_phase: bool


def view_of(node: NodeState, params: ProtocolParams, failf_visible: bool = True) -> NodeView:
    """Presented view of an honest (or honest-simulating) node."""
    frozen = node.failf or node.phases >= params.phases_limit
    if frozen:
        phases = node.phases
        sub = subphase_of(node.counter, params.D)
        saved = node.saved
        ne = node.nonempty_at_phase_start
        cloned = node.cloned_this_phase
    else:
        c = node.counter + 1
        if c >= params.D:
            phases = node.phases + 1
            sub = 0
            saved = node.value
            ne = node.value != Value.EMPTY
            cloned = False
        else:
            phases = node.phases
            sub = subphase_of(c, params.D)
            saved = node.saved
            ne = node.nonempty_at_phase_start
            cloned = node.cloned_this_phase
    return NodeView(
        value=node.value,
        saved=saved,
        endf=node.endf,
        failf=node.failf if failf_visible else False,
        phases=phases,
        subphase=sub,
        nonempty_at_phase_start=ne,
        cloned_this_phase=cloned,
    )


def is_frozen(node: NodeState, params: ProtocolParams) -> bool:
    """Failed nodes and nodes that hit the phase limit stop updating."""
    return node.failf or node.phases >= params.phases_limit


def propagate_failure(node: NodeState, partner_failed: bool) -> NodeState:
    """A node that exchanges with a failed partner fails too."""
    if partner_failed:
        node.failf = True
    return node


def advance_counter(node: NodeState, params: ProtocolParams,
                    schedule: PhaseSchedule) -> PhaseEvent:
    """Increment the local counter mod D and handle a phase boundary.

    On a wrap the node enters the next phase: the current value is
    snapshotted into saved before any phase logic runs on this exchange,
    one-shot guards re-arm, donor eligibility is recorded, and probe
    tallies are zeroed when the new phase is a termination phase.  If the
    new phase index reaches the limit, an undecided node fails.
    """
    c = node.counter + 1
    if c < params.D:
        node.counter = c
        return PhaseEvent(
            wrapped=False,
            new_phase=node.phases,
            kind=phase_kind(node.phases, schedule, params.gamma),
            subphase=subphase_of(c, params.D),
            limit_reached=False,
        )
    node.counter = 0
    node.phases += 1
    node.saved = node.value
    node.cancelled_this_phase = False
    node.adopted_this_phase = False
    node.cloned_this_phase = False
    node.nonempty_at_phase_start = node.value != Value.EMPTY
    kind = phase_kind(node.phases, schedule, params.gamma)
    if kind == PhaseKind.TERMINATION:
        node.probe_a = 0
        node.probe_b = 0
        node.probe_seen = 0
    limit = node.phases >= params.phases_limit
    if limit and not node.endf:
        node.failf = True
    return PhaseEvent(
        wrapped=True,
        new_phase=node.phases,
        kind=kind,
        subphase=0,
        limit_reached=limit,
    )


def termination_probe(node: NodeState, partner_value: Value, params: ProtocolParams) -> NodeState:
    """Consume one termination sample.

    Callers gate on: termination phase, subphase 1, phase alignment with
    the partner, endf false, and probe_seen < psi.  EMPTY observations
    consume a sample without incrementing either tally.
    """
    node.probe_seen += 1
    if partner_value == Value.A:
        node.probe_a += 1
    elif partner_value == Value.B:
        node.probe_b += 1
    return node


def termination_decide(node: NodeState, params: ProtocolParams) -> Value | None:
    """Apply the decision rule after the psi-th sample of this phase.

    Decides a value iff it was observed at least sigma2 times while the
    opposite value was observed at most sigma1 times.  The two branches
    are mutually exclusive because sigma1 < sigma2 (validated on params).
    """
    if node.probe_b <= params.sigma1 and node.probe_a >= params.sigma2:
        node.value = Value.A
        node.endf = True
        return Value.A
    if node.probe_a <= params.sigma1 and node.probe_b >= params.sigma2:
        node.value = Value.B
        node.endf = True
        return Value.B
    return None
