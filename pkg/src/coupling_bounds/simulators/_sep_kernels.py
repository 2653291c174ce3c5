"""Event-loop kernels for the exclusion simulators.

Both kernels are resumable: randoms arrive in pre-drawn chunks (exponential
spacings plus uniform integer picks) and the loop saves its cursor and the
pending event when a chunk runs out, so the Python wrappers can refill from
the replica's own stream without disturbing the event sequence.  Checkpoint
and probe times are processed strictly before the first event beyond them;
events past the final checkpoint are never applied.
"""

import numpy as np
from numba import njit

DONE = 0
NEED_RANDOMS = 1
COALESCED = 2

# functional modes
MODE_OCCUPATION = 0
MODE_WINDOW = 1


@njit(cache=True, nogil=True)
def advance_single(
    eta,
    edge_a,
    edge_b,
    member,
    win_bit,
    table,
    mode,
    total_rate,
    fstate,
    istate,
    ck_times,
    ck_values,
    exps,
    picks,
):
    # fstate: t, t_next, fval, F; istate: cursor, ck, n_events, has_pending, pending
    t = fstate[0]
    t_next = fstate[1]
    fval = fstate[2]
    F = fstate[3]
    cursor = istate[0]
    ck = istate[1]
    n_events = istate[2]
    has_pending = istate[3]
    pending = istate[4]
    n_ck = ck_times.size
    n_rand = exps.size
    status = NEED_RANDOMS
    while True:
        if has_pending == 0:
            if cursor >= n_rand:
                break
            t_next = t + exps[cursor] / total_rate
            pending = picks[cursor]
            cursor += 1
            has_pending = 1
        if mode == MODE_OCCUPATION:
            fv = fval
        else:
            fv = table[int(fval)]
        while ck < n_ck and ck_times[ck] <= t_next:
            ck_values[ck] = F + (ck_times[ck] - t) * fv
            ck += 1
        if ck >= n_ck:
            status = DONE
            break
        F += (t_next - t) * fv
        t = t_next
        e = int(pending)
        a = edge_a[e]
        b = edge_b[e]
        va = np.int64(eta[a])
        vb = np.int64(eta[b])
        if va != vb:
            eta[a] = vb
            eta[b] = va
            if mode == MODE_OCCUPATION:
                fval += (member[a] - member[b]) * (vb - va)
            else:
                if win_bit[a] >= 0:
                    fval += (vb - va) * (np.int64(1) << win_bit[a])
                if win_bit[b] >= 0:
                    fval += (va - vb) * (np.int64(1) << win_bit[b])
        n_events += 1
        has_pending = 0
    fstate[0] = t
    fstate[1] = t_next
    fstate[2] = fval
    fstate[3] = F
    istate[0] = cursor
    istate[1] = ck
    istate[2] = n_events
    istate[3] = has_pending
    istate[4] = pending
    return status


@njit(cache=True, nogil=True)
def advance_coupled(
    eta1,
    eta2,
    edge_a,
    edge_b,
    total_rate,
    fstate,
    istate,
    probe_times,
    probe_disc,
    exps,
    picks,
    stop_on_coalesce,
):
    # fstate: t, t_next; istate: cursor, pk, n_events, has_pending, pending, d1, d2
    # picks live in [0, 2 * n_edges): low bit is the coin, high bits the edge
    t = fstate[0]
    t_next = fstate[1]
    cursor = istate[0]
    pk = istate[1]
    n_events = istate[2]
    has_pending = istate[3]
    pending = istate[4]
    d1 = istate[5]
    d2 = istate[6]
    n_pk = probe_times.size
    n_rand = exps.size
    status = NEED_RANDOMS
    while True:
        if has_pending == 0:
            if cursor >= n_rand:
                break
            t_next = t + exps[cursor] / total_rate
            pending = picks[cursor]
            cursor += 1
            has_pending = 1
        while pk < n_pk and probe_times[pk] <= t_next:
            probe_disc[pk, 0] = d1
            probe_disc[pk, 1] = d2
            pk += 1
        if pk >= n_pk:
            status = DONE
            break
        r = int(pending)
        e = r >> 1
        coin = r & 1
        a = edge_a[e]
        b = edge_b[e]
        if d1 >= 0 and ((a == d1 and b == d2) or (a == d2 and b == d1)):
            # the arrow joining the two discrepancies: exactly one copy
            # performs the exchange and the pair annihilates
            if coin == 1:
                v = eta1[a]
                eta1[a] = eta1[b]
                eta1[b] = v
            else:
                v = eta2[a]
                eta2[a] = eta2[b]
                eta2[b] = v
            d1 = -1
            d2 = -1
            if stop_on_coalesce == 1:
                n_events += 1
                has_pending = 0
                t = t_next
                status = COALESCED
                break
        elif coin == 1:
            v = eta1[a]
            eta1[a] = eta1[b]
            eta1[b] = v
            v = eta2[a]
            eta2[a] = eta2[b]
            eta2[b] = v
            if d1 >= 0:
                if a == d1:
                    d1 = b
                elif b == d1:
                    d1 = a
                if a == d2:
                    d2 = b
                elif b == d2:
                    d2 = a
        n_events += 1
        has_pending = 0
        t = t_next
    fstate[0] = t
    fstate[1] = t_next
    istate[0] = cursor
    istate[1] = pk
    istate[2] = n_events
    istate[3] = has_pending
    istate[4] = pending
    istate[5] = d1
    istate[6] = d2
    return status
