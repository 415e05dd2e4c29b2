"""Asymmetric-cancellation / partial-duplication transition.

Each endpoint of an exchange runs this function on itself with the
partner's presented (pre-exchange) view; an endpoint only ever writes its
own state, which is what makes the cancellation asymmetric: the canceling
side compares its live value against the partner's phase-entry snapshot
and blanks itself unilaterally.

Cancellation and duplication are one-shot per phase: the attempt is
consumed by the node's first exchange in the second subphase whether or
not it fires.
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


def acpd_transition(node: NodeState, partner: NodeView, params: ProtocolParams,
                    schedule: PhaseSchedule = PhaseSchedule.ACPD_CYCLE) -> PhaseEvent | None:
    """Update one endpoint from the pre-exchange pair of states.

    Returns the PhaseEvent from the counter advance, or None if the node
    was frozen (failed or past the phase limit) before this exchange.
    """
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
        # Aligned phases imply the partner is in a cancellation phase too.
        if event.subphase == 1 and not node.cancelled_this_phase:
            node.cancelled_this_phase = True  # single chance, hit or miss
            if (node.value == Value.A and partner.saved == Value.B) or (
                node.value == Value.B and partner.saved == Value.A
            ):
                node.value = Value.EMPTY
    else:  # duplication
        if event.subphase == 1 and not node.adopted_this_phase:
            node.adopted_this_phase = True  # single chance, hit or miss
            if node.value == Value.EMPTY and partner.saved != Value.EMPTY:
                node.value = partner.saved
    return event
