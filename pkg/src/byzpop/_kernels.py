"""Compiled inner loops for Monte-Carlo-scale runs.

These kernels replicate, instruction for instruction, the semantics of the
pure-Python reference engine in engine.py: same chunked pair stream, same
endpoint order, same adversary bookkeeping.  A differential test holds the
two implementations bit-identical on shared seeds; any behavioral change
must land in both places.

The transition logic is deliberately written out inline inside each kernel
loop (hot counters hoisted into locals, arrays touched directly): routing
every endpoint update through a helper call costs roughly 5x-10x in
throughput, which matters at the ~10^10 exchanges the acceptance suite
executes.

State is structure-of-arrays; values are int8 with 0 = A, 1 = B,
2 = empty, booleans are uint8.  Register indices into the int64 scratch
vector are the _R* constants below.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# value encoding
VAL_A = 0
VAL_B = 1
VAL_EMPTY = 2

# schedule codes
SCHED_ACPD = 0
SCHED_SCFD = 1
SCHED_SCFD_TF = 2

# protocol rule codes
PROTO_ACPD = 0
PROTO_SCFD = 1

# adversary codes (the kernel only sees adversaries with in-loop logic;
# static corruption happens in Python before the first chunk)
ADV_NONE = 0
ADV_WEAK_FIRST_DUAL = 1
ADV_OBLIVIOUS_FIRST_DUAL = 2
ADV_BOOSTER = 3

# stop codes
STOP_RUNNING = 0
STOP_DECIDED = 1
STOP_FAILED = 2
STOP_MIXED = 3

# registers
_R_A = 0            # honest nodes currently holding A
_R_B = 1            # honest nodes currently holding B
_R_UNDECIDED = 2    # honest nodes with endf false
_R_DEC_A = 3        # honest decided-A count
_R_DEC_B = 4        # honest decided-B count
_R_BUDGET = 5       # remaining corruption budget
_R_STOP = 6
_R_DEC_EX = 7       # 1-based exchange count at the last honest decision
_R_DRIFT_MIN = 8
_R_DRIFT_MAX = 9
_R_DRIFT_GAP = 10
_R_SPAN_MIN = 11    # smallest phase index some clock is still in
_R_SPAN_MAX = 12    # largest phase index any clock has entered
_R_CAPTURED = 13    # first-dual pairs captured
_R_FAULTY = 14      # |faulty|
_R_HIST_OVF = 15
N_REGS = 16


@njit(cache=True, nogil=True, inline="always")
def _kind_of(p, sched, gamma):
    if sched == SCHED_ACPD:
        j = p % (gamma + 2)
        if j < gamma:
            return 0
        return 1 if j == gamma else 2
    if sched == SCHED_SCFD:
        return p % 3
    if p == 0:
        return 1
    return (p - 1) % 3


@njit(cache=True, nogil=True)
def _phase_wrap(phase_counts, span_first, span_last, snap_a, snap_b, snap_e,
                regs, new_p, i, a_h, b_h, honest_n):
    """Clock bookkeeping on a wrap into new_p (rare: ~2/D per exchange)."""
    phase_counts[new_p - 1] -= 1
    phase_counts[new_p] += 1
    if new_p > regs[_R_SPAN_MAX]:
        regs[_R_SPAN_MAX] = new_p
        span_first[new_p] = i
        snap_a[new_p] = a_h
        snap_b[new_p] = b_h
        snap_e[new_p] = honest_n - a_h - b_h
    m = regs[_R_SPAN_MIN]
    while m < regs[_R_SPAN_MAX] and phase_counts[m] == 0:
        span_last[m] = i
        m += 1
    regs[_R_SPAN_MIN] = m


@njit(cache=True, nogil=True)
def drift_kernel(us, vs, n, unwrapped, hist, regs):
    """Pure-scheduler counter tracking for the drift validation."""
    cap = hist.shape[0]
    dmin = regs[_R_DRIFT_MIN]
    dmax = regs[_R_DRIFT_MAX]
    dgap = regs[_R_DRIFT_GAP]
    ovf = regs[_R_HIST_OVF]
    for j in range(us.shape[0]):
        u = us[j]
        v = vs[j]
        if v >= u:
            v += 1
        for s in range(2):
            x = u if s == 0 else v
            c = unwrapped[x]
            unwrapped[x] = c + 1
            if c + 1 >= cap:
                ovf = 1
                continue
            hist[c] -= 1
            hist[c + 1] += 1
            if c + 1 > dmax:
                dmax = c + 1
            while hist[dmin] == 0:
                dmin += 1
            if dmax - dmin > dgap:
                dgap = dmax - dmin
    regs[_R_DRIFT_MIN] = dmin
    regs[_R_DRIFT_MAX] = dmax
    regs[_R_DRIFT_GAP] = dgap
    regs[_R_HIST_OVF] = ovf
    return us.shape[0]


@njit(cache=True, nogil=True)
def protocol_kernel(us, vs, start_index, n,
                    proto, sched, gamma, D, psi, s1, s2, limit,
                    adv, maj_init, adv_target, initial_values,
                    val, sav, endf, failf, phases, counter, pa, pb, ps,
                    canc, adopt, cloned, ne,
                    faulty, fsim, unwrapped,
                    spent_cancel, spent_adopt,
                    hist, delta_a, delta_b, phase_counts,
                    span_first, span_last, snap_a, snap_b, snap_e,
                    regs):
    """Process one chunk of exchanges for a single-machine protocol.

    Returns the number of exchanges consumed (equals the chunk length
    unless a stop condition fired mid-chunk).
    """
    third = D // 3
    cap = hist.shape[0]
    # hoisted registers
    a_h = regs[_R_A]
    b_h = regs[_R_B]
    und = regs[_R_UNDECIDED]
    dca = regs[_R_DEC_A]
    dcb = regs[_R_DEC_B]
    budget = regs[_R_BUDGET]
    stop = regs[_R_STOP]
    dec_ex = regs[_R_DEC_EX]
    dmin = regs[_R_DRIFT_MIN]
    dmax = regs[_R_DRIFT_MAX]
    dgap = regs[_R_DRIFT_GAP]
    captured = regs[_R_CAPTURED]
    n_faulty = regs[_R_FAULTY]
    ovf = regs[_R_HIST_OVF]
    consumed = us.shape[0]

    for j in range(us.shape[0]):
        i = start_index + j
        u = us[j]
        v = vs[j]
        if v >= u:
            v += 1
        if v < u:
            t = u
            u = v
            v = t

        # dynamic first-dual capture, checked before this exchange resolves
        if adv == ADV_WEAK_FIRST_DUAL or adv == ADV_OBLIVIOUS_FIRST_DUAL:
            if (
                budget >= 2
                and unwrapped[u] == 0
                and unwrapped[v] == 0
                and faulty[u] == 0
                and faulty[v] == 0
                and (
                    adv == ADV_OBLIVIOUS_FIRST_DUAL
                    or (initial_values[u] == maj_init and initial_values[v] == maj_init)
                )
            ):
                target = adv_target if adv == ADV_OBLIVIOUS_FIRST_DUAL else (
                    1 - maj_init
                )
                for x in (u, v):
                    faulty[x] = 1
                    fsim[x] = 1
                    if val[x] == VAL_A:
                        a_h -= 1
                    elif val[x] == VAL_B:
                        b_h -= 1
                    und -= 1
                    n_faulty += 1
                    val[x] = target
                    sav[x] = VAL_EMPTY
                budget -= 2
                captured += 1
                if i == 0:
                    # phase-0 entry snapshot reflects exchange-0 corruption
                    snap_a[0] = a_h
                    snap_b[0] = b_h
                    snap_e[0] = (n - n_faulty) - a_h - b_h

        # drift tracking on the scheduler-pick counters
        for s in range(2):
            x = u if s == 0 else v
            c = unwrapped[x]
            unwrapped[x] = c + 1
            if c + 1 >= cap:
                ovf = 1
                continue
            hist[c] -= 1
            hist[c + 1] += 1
            if c + 1 > dmax:
                dmax = c + 1
            while hist[dmin] == 0:
                dmin += 1
            if dmax - dmin > dgap:
                dgap = dmax - dmin

        # pre-exchange content snapshots plus the post-advance clock
        # projection each endpoint presents (and the pre-exchange honest
        # tallies the booster's minority choice is based on)
        a_pre = a_h
        b_pre = b_h
        u_val = val[u]; u_endf = endf[u]; u_failf = failf[u]
        u_ph0 = phases[u]
        if u_failf != 0 or u_ph0 >= limit:
            u_ph = u_ph0; u_sub = counter[u] // third
            u_sav = sav[u]; u_ne = ne[u]; u_cl = cloned[u]
        else:
            uc = counter[u] + 1
            if uc >= D:
                u_ph = u_ph0 + 1; u_sub = 0
                u_sav = u_val; u_ne = 1 if u_val != VAL_EMPTY else 0; u_cl = 0
            else:
                u_ph = u_ph0; u_sub = uc // third
                u_sav = sav[u]; u_ne = ne[u]; u_cl = cloned[u]
        v_val = val[v]; v_endf = endf[v]; v_failf = failf[v]
        v_ph0 = phases[v]
        if v_failf != 0 or v_ph0 >= limit:
            v_ph = v_ph0; v_sub = counter[v] // third
            v_sav = sav[v]; v_ne = ne[v]; v_cl = cloned[v]
        else:
            vc = counter[v] + 1
            if vc >= D:
                v_ph = v_ph0 + 1; v_sub = 0
                v_sav = v_val; v_ne = 1 if v_val != VAL_EMPTY else 0; v_cl = 0
            else:
                v_ph = v_ph0; v_sub = vc // third
                v_sav = sav[v]; v_ne = ne[v]; v_cl = cloned[v]

        for side in range(2):
            if side == 0:
                x = u
                w_val = v_val; w_sav = v_sav; w_endf = v_endf
                w_failf = v_failf; w_ph = v_ph; w_sub = v_sub
                w_ne = v_ne; w_cl = v_cl
                x_ph = u_ph
                y = v
                y_clock = v_ph0
            else:
                x = v
                w_val = u_val; w_sav = u_sav; w_endf = u_endf
                w_failf = u_failf; w_ph = u_ph; w_sub = u_sub
                w_ne = u_ne; w_cl = u_cl
                x_ph = v_ph
                y = u
                y_clock = u_ph0

            if faulty[x] != 0 and fsim[x] == 0:
                # forging faulty node: clock only, parked at the limit
                if phases[x] < limit:
                    c = counter[x] + 1
                    if c >= D:
                        c = 0
                        phases[x] += 1
                        _phase_wrap(phase_counts, span_first, span_last,
                                    snap_a, snap_b, snap_e, regs,
                                    phases[x], i, a_h, b_h, n - n_faulty)
                    counter[x] = c
                continue

            y_forges = faulty[y] != 0 and fsim[y] == 0
            offered = 0  # 1 cancel, 2 adopt
            if y_forges:
                # minority-impersonation view, aligned with x's post-advance phase
                pred = x_ph
                k = _kind_of(pred, sched, gamma)
                minority = VAL_B if b_pre <= a_pre else VAL_A
                fv = VAL_EMPTY
                fcl = 1
                if k == 1:
                    fv = minority
                    fcl = 0
                elif k == 0:
                    if spent_cancel[y] != y_clock:
                        fv = minority
                        fcl = 0
                        offered = 1
                else:
                    if spent_adopt[y] != y_clock:
                        fv = minority
                        fcl = 0
                        offered = 2
                w_val = fv
                w_sav = fv
                w_endf = 0
                w_failf = 0
                w_ph = pred
                w_sub = 1
                w_ne = 1 if fv != VAL_EMPTY else 0
                w_cl = fcl
            elif faulty[y] != 0:
                w_failf = 0  # impersonators never show failure

            # ---- endpoint update from the pre-exchange pair ----
            old = val[x]
            if failf[x] != 0 or phases[x] >= limit:
                continue  # frozen
            if w_failf != 0:
                failf[x] = 1
                if faulty[x] == 0:
                    stop = STOP_FAILED
                continue
            c = counter[x] + 1
            if c >= D:
                c = 0
                phases[x] += 1
                sav[x] = val[x]
                canc[x] = 0
                adopt[x] = 0
                cloned[x] = 0
                ne[x] = 1 if val[x] != VAL_EMPTY else 0
                if _kind_of(phases[x], sched, gamma) == 1:
                    pa[x] = 0
                    pb[x] = 0
                    ps[x] = 0
                _phase_wrap(phase_counts, span_first, span_last,
                            snap_a, snap_b, snap_e, regs,
                            phases[x], i, a_h, b_h, n - n_faulty)
                if phases[x] >= limit:
                    counter[x] = 0
                    if endf[x] == 0:
                        failf[x] = 1
                        if faulty[x] == 0:
                            stop = STOP_FAILED
                    continue
            counter[x] = c
            if endf[x] != 0:
                continue
            k = _kind_of(phases[x], sched, gamma)
            sub = c // third
            decided_now = False
            if k == 1:
                # Sampling runs on the node's own subphase clock: the first
                # psi exchanges of the second subphase each record whatever
                # value the partner presents.
                if sub == 1 and ps[x] < psi:
                    ps[x] += 1
                    if w_val == VAL_A:
                        pa[x] += 1
                    elif w_val == VAL_B:
                        pb[x] += 1
                    if ps[x] == psi:
                        if pb[x] <= s1 and pa[x] >= s2:
                            val[x] = VAL_A
                            endf[x] = 1
                            decided_now = True
                        elif pa[x] <= s1 and pb[x] >= s2:
                            val[x] = VAL_B
                            endf[x] = 1
                            decided_now = True
            elif phases[x] == w_ph:
                if k == 0:
                    if proto == PROTO_ACPD:
                        if sub == 1 and canc[x] == 0:
                            canc[x] = 1
                            if (val[x] == VAL_A and w_sav == VAL_B) or (
                                val[x] == VAL_B and w_sav == VAL_A
                            ):
                                val[x] = VAL_EMPTY
                    else:
                        if (sub == 1 or w_sub == 1) and w_endf == 0:
                            if (val[x] == VAL_A and w_val == VAL_B) or (
                                val[x] == VAL_B and w_val == VAL_A
                            ):
                                val[x] = VAL_EMPTY
                else:
                    if proto == PROTO_ACPD:
                        if sub == 1 and adopt[x] == 0:
                            adopt[x] = 1
                            if val[x] == VAL_EMPTY and w_sav != VAL_EMPTY:
                                val[x] = w_sav
                    else:
                        if (
                            val[x] == VAL_EMPTY
                            and w_endf == 0
                            and w_sub == 1
                            and w_val != VAL_EMPTY
                            and w_ne != 0
                            and w_cl == 0
                        ):
                            val[x] = w_val
                        elif (
                            val[x] != VAL_EMPTY
                            and sub == 1
                            and ne[x] != 0
                            and cloned[x] == 0
                            and w_val == VAL_EMPTY
                            and w_endf == 0
                        ):
                            cloned[x] = 1

            new = val[x]
            if faulty[x] == 0:
                if old != new:
                    p = phases[x]
                    if old == VAL_A:
                        a_h -= 1
                        delta_a[p] -= 1
                    elif old == VAL_B:
                        b_h -= 1
                        delta_b[p] -= 1
                    if new == VAL_A:
                        a_h += 1
                        delta_a[p] += 1
                    elif new == VAL_B:
                        b_h += 1
                        delta_b[p] += 1
                if decided_now:
                    und -= 1
                    if new == VAL_A:
                        dca += 1
                    else:
                        dcb += 1
                    if dca > 0 and dcb > 0:
                        stop = STOP_MIXED
                    elif und == 0:
                        stop = STOP_DECIDED
                        dec_ex = i + 1
            if y_forges and offered != 0:
                if offered == 1 and old != VAL_EMPTY and new == VAL_EMPTY:
                    spent_cancel[y] = y_clock
                elif offered == 2 and old == VAL_EMPTY and new != VAL_EMPTY and not decided_now:
                    spent_adopt[y] = y_clock

        if stop != STOP_RUNNING:
            consumed = j + 1
            break

    regs[_R_A] = a_h
    regs[_R_B] = b_h
    regs[_R_UNDECIDED] = und
    regs[_R_DEC_A] = dca
    regs[_R_DEC_B] = dcb
    regs[_R_BUDGET] = budget
    regs[_R_STOP] = stop
    regs[_R_DEC_EX] = dec_ex
    regs[_R_DRIFT_MIN] = dmin
    regs[_R_DRIFT_MAX] = dmax
    regs[_R_DRIFT_GAP] = dgap
    regs[_R_CAPTURED] = captured
    regs[_R_FAULTY] = n_faulty
    regs[_R_HIST_OVF] = ovf
    return consumed


@njit(cache=True, nogil=True)
def combined_kernel(us, vs, start_index, n,
                    gamma, D, psi, s1, s2, limit,
                    probe_len, z0_thresh,
                    adv, maj_init, adv_target, initial_values,
                    counter, phases,
                    mval, msav, mendf, mpa, mpb, mps, mcanc, madopt,
                    mcloned, mne,
                    z0, zca, zcb, zseen, run_idx, orig,
                    xdec, ydec, cval, cendf, cfailf, coin2, coin3,
                    faulty, fsim, unwrapped,
                    spent_cancel, spent_adopt,
                    hist, regs):
    """Process one chunk of exchanges for the combined protocol.

    Machine index 0 is the asymmetric machine, 1 the symmetric one; the
    two sub-states every node runs in parallel live in the rows of the
    (2, n) machine arrays.  The machines advance in lockstep, so one
    clock (counter/phases) per node serves both, and the fixed-length run
    boundary fires exactly once, at the wrap that reaches the phase
    budget.  Partner machine views are built only for machines that can
    still read them.  Returns the number of exchanges consumed.
    """
    third = D // 3
    cap = hist.shape[0]
    minority_init = 1 - maj_init
    # projected partner views, slots indexed machine*2 + endpoint
    p_val = np.empty(4, np.int8)
    p_sav = np.empty(4, np.int8)
    p_endf = np.empty(4, np.uint8)
    p_ne = np.empty(4, np.uint8)
    p_cl = np.empty(4, np.uint8)
    und = regs[_R_UNDECIDED]
    dca = regs[_R_DEC_A]
    dcb = regs[_R_DEC_B]
    budget = regs[_R_BUDGET]
    stop = regs[_R_STOP]
    dec_ex = regs[_R_DEC_EX]
    dmin = regs[_R_DRIFT_MIN]
    dmax = regs[_R_DRIFT_MAX]
    dgap = regs[_R_DRIFT_GAP]
    captured = regs[_R_CAPTURED]
    n_faulty = regs[_R_FAULTY]
    ovf = regs[_R_HIST_OVF]
    consumed = us.shape[0]

    for j in range(us.shape[0]):
        i = start_index + j
        u = us[j]
        v = vs[j]
        if v >= u:
            v += 1
        if v < u:
            t = u
            u = v
            v = t

        if adv == ADV_WEAK_FIRST_DUAL or adv == ADV_OBLIVIOUS_FIRST_DUAL:
            if (
                budget >= 2
                and unwrapped[u] == 0
                and unwrapped[v] == 0
                and faulty[u] == 0
                and faulty[v] == 0
                and (
                    adv == ADV_OBLIVIOUS_FIRST_DUAL
                    or (initial_values[u] == maj_init and initial_values[v] == maj_init)
                )
            ):
                target = adv_target if adv == ADV_OBLIVIOUS_FIRST_DUAL else (
                    1 - maj_init
                )
                for x in (u, v):
                    faulty[x] = 1
                    fsim[x] = 1
                    orig[x] = target
                    und -= 1
                    n_faulty += 1
                budget -= 2
                captured += 1

        for s in range(2):
            x = u if s == 0 else v
            c = unwrapped[x]
            unwrapped[x] = c + 1
            if c + 1 >= cap:
                ovf = 1
                continue
            hist[c] -= 1
            hist[c + 1] += 1
            if c + 1 > dmax:
                dmax = c + 1
            while hist[dmin] == 0:
                dmin += 1
            if dmax - dmin > dgap:
                dgap = dmax - dmin

        # pre-exchange endpoint snapshots
        u_run = run_idx[u]; u_orig = orig[u]
        v_run = run_idx[v]; v_orig = orig[v]
        u_done = cendf[u] != 0 or cfailf[u] != 0
        v_done = cendf[v] != 0 or cfailf[v] != 0
        u_forges = faulty[u] != 0 and fsim[u] == 0
        v_forges = faulty[v] != 0 and fsim[v] == 0
        u_clock = phases[u]
        v_clock = phases[v]
        u_active = (not u_done) and (not u_forges) and u_run >= 1 and u_run <= 3
        v_active = (not v_done) and (not v_forges) and v_run >= 1 and v_run <= 3

        # shared-clock projection each endpoint presents
        if u_clock >= limit:
            u_ph = u_clock
            u_sub = counter[u] // third
            u_wrapped = False
        else:
            uc = counter[u] + 1
            if uc >= D:
                u_ph = u_clock + 1
                u_sub = 0
                u_wrapped = True
            else:
                u_ph = u_clock
                u_sub = uc // third
                u_wrapped = False
        if v_clock >= limit:
            v_ph = v_clock
            v_sub = counter[v] // third
            v_wrapped = False
        else:
            vc = counter[v] + 1
            if vc >= D:
                v_ph = v_clock + 1
                v_sub = 0
                v_wrapped = True
            else:
                v_ph = v_clock
                v_sub = vc // third
                v_wrapped = False

        # partner machine views, built only if the other side can read them
        for m in range(2):
            if v_active and mendf[m, v] == 0 and v_run == u_run:
                slot = m * 2 + 0  # u's machine m, read by v
                uval = mval[m, u]
                p_val[slot] = uval
                p_endf[slot] = mendf[m, u]
                if u_wrapped:
                    p_sav[slot] = uval
                    p_ne[slot] = 1 if uval != VAL_EMPTY else 0
                    p_cl[slot] = 0
                else:
                    p_sav[slot] = msav[m, u]
                    p_ne[slot] = mne[m, u]
                    p_cl[slot] = mcloned[m, u]
            if u_active and mendf[m, u] == 0 and u_run == v_run:
                slot = m * 2 + 1  # v's machine m, read by u
                vval = mval[m, v]
                p_val[slot] = vval
                p_endf[slot] = mendf[m, v]
                if v_wrapped:
                    p_sav[slot] = vval
                    p_ne[slot] = 1 if vval != VAL_EMPTY else 0
                    p_cl[slot] = 0
                else:
                    p_sav[slot] = msav[m, v]
                    p_ne[slot] = mne[m, v]
                    p_cl[slot] = mcloned[m, v]

        for side in range(2):
            if side == 0:
                x = u
                y = v
                y_run = v_run
                y_orig = v_orig
                y_clock = v_clock
                y_forges = v_forges
                x_proj_ph = u_ph
                w_proj_ph = v_ph
                w_proj_sub = v_sub
            else:
                x = v
                y = u
                y_run = u_run
                y_orig = u_orig
                y_clock = u_clock
                y_forges = u_forges
                x_proj_ph = v_ph
                w_proj_ph = u_ph
                w_proj_sub = u_sub

            if faulty[x] != 0 and fsim[x] == 0:
                # forging faulty node: clock only, parked at the limit
                if phases[x] < limit:
                    c = counter[x] + 1
                    if c >= D:
                        c = 0
                        phases[x] += 1
                    counter[x] = c
                continue
            if cendf[x] != 0 or cfailf[x] != 0:
                continue

            if run_idx[x] == 0:
                pv = minority_init if y_forges else y_orig
                zseen[x] += 1
                if pv == VAL_A:
                    zca[x] += 1
                elif pv == VAL_B:
                    zcb[x] += 1
                if zseen[x] >= probe_len:
                    diff = zca[x] - zcb[x]
                    if diff < 0:
                        diff = -diff
                    z0[x] = 1 if diff >= z0_thresh else 0
                    run_idx[x] = 1
                    counter[x] = 0
                    phases[x] = 0
                    for m in range(2):
                        mval[m, x] = orig[x]
                        msav[m, x] = VAL_EMPTY
                        mendf[m, x] = 0
                        mpa[m, x] = 0
                        mpb[m, x] = 0
                        mps[m, x] = 0
                        mcanc[m, x] = 0
                        madopt[m, x] = 0
                        mcloned[m, x] = 0
                        mne[m, x] = 0
                continue

            # ---- advance the shared machine clock ----
            if phases[x] >= limit:
                continue
            r = run_idx[x]
            c = counter[x] + 1
            boundary = False
            if c >= D:
                c = 0
                phases[x] += 1
                new_p = phases[x]
                for m in range(2):
                    sched = SCHED_ACPD if m == 0 else SCHED_SCFD
                    msav[m, x] = mval[m, x]
                    mcanc[m, x] = 0
                    madopt[m, x] = 0
                    mcloned[m, x] = 0
                    mne[m, x] = 1 if mval[m, x] != VAL_EMPTY else 0
                    if _kind_of(new_p, sched, gamma) == 1:
                        mpa[m, x] = 0
                        mpb[m, x] = 0
                        mps[m, x] = 0
                boundary = new_p >= limit
            counter[x] = c
            if boundary:
                # fixed-length run boundary: record decisions, reset or finish
                xdec[r - 1, x] = mval[0, x] if mendf[0, x] != 0 else -1
                ydec[r - 1, x] = mval[1, x] if mendf[1, x] != 0 else -1
                if r < 3:
                    run_idx[x] = r + 1
                    counter[x] = 0
                    phases[x] = 0
                    if r + 1 == 2:
                        start = VAL_A if (orig[x] == VAL_B and coin2[x] != 0) else orig[x]
                    else:
                        start = VAL_B if (orig[x] == VAL_A and coin3[x] != 0) else orig[x]
                    for m in range(2):
                        mval[m, x] = start
                        msav[m, x] = VAL_EMPTY
                        mendf[m, x] = 0
                        mpa[m, x] = 0
                        mpb[m, x] = 0
                        mps[m, x] = 0
                        mcanc[m, x] = 0
                        madopt[m, x] = 0
                        mcloned[m, x] = 0
                        mne[m, x] = 0
                else:
                    run_idx[x] = 4
                    if z0[x] == 1:
                        chosen = xdec[0, x]
                    elif xdec[1, x] == -1 or xdec[2, x] == -1:
                        chosen = np.int8(-1)
                    elif xdec[1, x] == xdec[2, x]:
                        chosen = xdec[0, x]
                    else:
                        chosen = ydec[0, x]
                    if chosen == -1:
                        cfailf[x] = 1
                        if faulty[x] == 0:
                            stop = STOP_FAILED
                    else:
                        cval[x] = chosen
                        cendf[x] = 1
                        if faulty[x] == 0:
                            und -= 1
                            if chosen == VAL_A:
                                dca += 1
                            else:
                                dcb += 1
                            if dca > 0 and dcb > 0:
                                stop = STOP_MIXED
                            elif und == 0:
                                stop = STOP_DECIDED
                                dec_ex = i + 1
                continue

            # ---- machine rules from the pre-exchange pair ----
            aligned = y_forges or y_run == r
            sub = c // third
            for m in range(2):
                if mendf[m, x] != 0:
                    continue
                proto = PROTO_ACPD if m == 0 else PROTO_SCFD
                sched = SCHED_ACPD if m == 0 else SCHED_SCFD
                offered = 0
                if y_forges:
                    pred = x_proj_ph
                    k = _kind_of(pred, sched, gamma)
                    fv = VAL_EMPTY
                    fcl = 1
                    if k == 1:
                        fv = minority_init
                        fcl = 0
                    elif k == 0:
                        if spent_cancel[m, y] != y_clock:
                            fv = minority_init
                            fcl = 0
                            offered = 1
                    else:
                        if spent_adopt[m, y] != y_clock:
                            fv = minority_init
                            fcl = 0
                            offered = 2
                    w_val = fv
                    w_sav = fv
                    w_endf = 0
                    w_ph = pred
                    w_sub = 1
                    w_ne = 1 if fv != VAL_EMPTY else 0
                    w_cl = fcl
                elif aligned:
                    slot = m * 2 + (1 if side == 0 else 0)
                    w_val = p_val[slot]
                    w_sav = p_sav[slot]
                    w_endf = p_endf[slot]
                    w_ph = w_proj_ph
                    w_sub = w_proj_sub
                    w_ne = p_ne[slot]
                    w_cl = p_cl[slot]
                else:
                    w_val = VAL_EMPTY
                    w_sav = VAL_EMPTY
                    w_endf = 0
                    w_ph = -1
                    w_sub = 0
                    w_ne = 0
                    w_cl = 0

                k = _kind_of(phases[x], sched, gamma)
                old = mval[m, x]
                decided_now = False
                if k == 1:
                    if sub == 1 and mps[m, x] < psi:
                        mps[m, x] += 1
                        if w_val == VAL_A:
                            mpa[m, x] += 1
                        elif w_val == VAL_B:
                            mpb[m, x] += 1
                        if mps[m, x] == psi:
                            if mpb[m, x] <= s1 and mpa[m, x] >= s2:
                                mval[m, x] = VAL_A
                                mendf[m, x] = 1
                                decided_now = True
                            elif mpa[m, x] <= s1 and mpb[m, x] >= s2:
                                mval[m, x] = VAL_B
                                mendf[m, x] = 1
                                decided_now = True
                elif phases[x] == w_ph:
                    if k == 0:
                        if proto == PROTO_ACPD:
                            if sub == 1 and mcanc[m, x] == 0:
                                mcanc[m, x] = 1
                                if (mval[m, x] == VAL_A and w_sav == VAL_B) or (
                                    mval[m, x] == VAL_B and w_sav == VAL_A
                                ):
                                    mval[m, x] = VAL_EMPTY
                        else:
                            if (sub == 1 or w_sub == 1) and w_endf == 0:
                                if (mval[m, x] == VAL_A and w_val == VAL_B) or (
                                    mval[m, x] == VAL_B and w_val == VAL_A
                                ):
                                    mval[m, x] = VAL_EMPTY
                    else:
                        if proto == PROTO_ACPD:
                            if sub == 1 and madopt[m, x] == 0:
                                madopt[m, x] = 1
                                if mval[m, x] == VAL_EMPTY and w_sav != VAL_EMPTY:
                                    mval[m, x] = w_sav
                        else:
                            if (
                                mval[m, x] == VAL_EMPTY
                                and w_endf == 0
                                and w_sub == 1
                                and w_val != VAL_EMPTY
                                and w_ne != 0
                                and w_cl == 0
                            ):
                                mval[m, x] = w_val
                            elif (
                                mval[m, x] != VAL_EMPTY
                                and sub == 1
                                and mne[m, x] != 0
                                and mcloned[m, x] == 0
                                and w_val == VAL_EMPTY
                                and w_endf == 0
                            ):
                                mcloned[m, x] = 1

                if y_forges and offered != 0:
                    new = mval[m, x]
                    if offered == 1 and old != VAL_EMPTY and new == VAL_EMPTY:
                        spent_cancel[m, y] = y_clock
                    elif offered == 2 and old == VAL_EMPTY and new != VAL_EMPTY and not decided_now:
                        spent_adopt[m, y] = y_clock

        if stop != STOP_RUNNING:
            consumed = j + 1
            break

    regs[_R_UNDECIDED] = und
    regs[_R_DEC_A] = dca
    regs[_R_DEC_B] = dcb
    regs[_R_BUDGET] = budget
    regs[_R_STOP] = stop
    regs[_R_DEC_EX] = dec_ex
    regs[_R_DRIFT_MIN] = dmin
    regs[_R_DRIFT_MAX] = dmax
    regs[_R_DRIFT_GAP] = dgap
    regs[_R_CAPTURED] = captured
    regs[_R_FAULTY] = n_faulty
    regs[_R_HIST_OVF] = ovf
    return consumed
