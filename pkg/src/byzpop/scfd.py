"""Symmetric-cancellation / full-duplication transition.

Cancellation compares the two live values and fires whenever either
endpoint is in its second subphase; because the condition is symmetric in
the two pre-exchange states, both endpoints blank themselves in the same
exchange, so with no faulty nodes the honest tally difference a-b is
conserved exactly through every cancellation phase.

Duplication is written as a mirrored donor/recipient rule pair over the
same joint predicate, so the donor marks its once-per-phase clone exactly
when some recipient adopts.  A donor must have been non-empty at phase
entry and not yet have cloned this phase; the recipient may be in any
subphase, only the donor's subphase is constrained.
"""

from __future__ import annotations

from .common import (
    NodeView,
    PhaseEvent,
    PhaseKind,
    PhaseSchedule,
    advance_counter,
    is_frozen,
    termination_decide,
    termination_probe,
)
from .core import NodeState, ProtocolParams, Value


def _opposite_values(x: Value, y: Value) -> bool:
    return (x == Value.A and y == Value.B) or (x == Value.B and y == Value.A)


def scfd_transition(node: NodeState, partner: NodeView, params: ProtocolParams,
                    schedule: PhaseSchedule = PhaseSchedule.SCFD_CYCLE) -> PhaseEvent | None:
    """Update one endpoint from the pre-exchange pair of states."""
    if is_frozen(node, params):
        return None
    if partner.failf:
        node.failf = True
        return None

    event = advance_counter(node, params, schedule)
    if event.limit_reached or node.endf:
        return event

    kind = event.kind
    if kind == PhaseKind.TERMINATION:
        # Sampling runs on the node's own subphase clock: the first psi
        # exchanges of the second subphase each record what the partner
        # presents, wherever the partner's own clock happens to be.
        if event.subphase == 1 and node.probe_seen < params.psi:
            termination_probe(node, partner.value, params)
            if node.probe_seen == params.psi:
                termination_decide(node, params)
        return event
    if node.phases != partner.phases:
        return event
    if kind == PhaseKind.CANCELLATION:
        if (event.subphase == 1 or partner.subphase == 1) and not partner.endf:
            if _opposite_values(node.value, partner.value):
                node.value = Value.EMPTY
    else:  # duplication
        if (
            node.value == Value.EMPTY
            and not partner.endf
            and partner.subphase == 1
            and partner.value != Value.EMPTY
            and partner.nonempty_at_phase_start
            and not partner.cloned_this_phase
        ):
            node.value = partner.value
        elif (
            node.value != Value.EMPTY
            and event.subphase == 1
            and node.nonempty_at_phase_start
            and not node.cloned_this_phase
            and partner.value == Value.EMPTY
            and not partner.endf
        ):
            node.cloned_this_phase = True
    return event
