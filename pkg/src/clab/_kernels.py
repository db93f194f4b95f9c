"""Compiled inner loops.

Two hot paths live here: the fixed-step fluid integrator (hundreds of
thousands of steps per settle call) and the embedded-chain estimator
(tens of millions of events per protocol run).  Everything else in the
package is plain Python; the reference implementations of these same
transitions live in `fluid` and `simulator` and are pinned to the kernels
by equality tests.

State is passed as preallocated numpy arrays; scalars that must survive
across chunked calls travel in a small int64 ``meta`` array.  Kernels
return 0 on success and 1 when a state array is too small.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# meta[] slots shared by both chain kernels
META_TOP = 0        # current maximum queue length (queue mode) / support index (aggregate mode)
META_TOTAL = 1      # total tasks in the system
META_STEP = 2       # events processed so far
META_CURSOR = 3     # samples collected so far
META_NEXT = 4       # step index of the next sample
META_SPACING = 5    # steps between samples
META_SIZE = 6


@njit(cache=True, nogil=True)
def fluid_steps(V, lam, p, dt, n_steps, zero_tol):
    """Advance ``n_steps`` Euler steps with feasibility projection, in place.

    ``V[0]`` carries the boundary coordinate and is kept equal to ``V[1] + 1``;
    coordinates at and beyond ``len(V)`` are implicitly zero.
    """
    D = V.shape[0]
    f = np.empty(D, dtype=np.float64)
    one_minus_p = 1.0 - p
    for _ in range(n_steps):
        # drift on the pre-step state
        for i in range(1, D):
            vi = V[i]
            vim1 = V[i - 1]
            vip1 = V[i + 1] if i + 1 < D else 0.0
            if vi > zero_tol:
                g = p
            elif vim1 > zero_tol:
                g = lam * vim1
                if g > p:
                    g = p
            else:
                g = 0.0
            f[i] = lam * (vim1 - vi) - one_minus_p * (vi - vip1) - g
        # Euler update, clipped to the nonnegative orthant
        for i in range(1, D):
            w = V[i] + dt * f[i]
            V[i] = w if w > 0.0 else 0.0
        # single backward pass restoring nonincreasing differences in [0, 1]
        prev = 0.0
        for i in range(D - 1, 0, -1):
            tail = V[i + 1] if i + 1 < D else 0.0
            d = V[i] - tail
            if d < prev:
                d = prev
            if d > 1.0:
                d = 1.0
            V[i] = tail + d
            prev = d
        V[0] = V[1] + 1.0
    return 0


@njit(cache=True, nogil=True)
def fluid_settle(V, lam, p, dt, max_steps, zero_tol, target, tol_sq):
    """Step until the weighted squared distance to ``target`` is <= ``tol_sq``.

    Returns the number of steps taken on success, -1 if ``max_steps`` were
    exhausted.  ``target`` must have the same length as ``V``.
    """
    D = V.shape[0]
    for step in range(max_steps + 1):
        dist = 0.0
        wgt = 1.0
        for i in range(D):
            diff = V[i] - target[i]
            dist += diff * diff * wgt
            wgt *= 0.5
        if dist <= tol_sq:
            return step
        if step == max_steps:
            break
        fluid_steps(V, lam, p, dt, 1, zero_tol)
    return -1


@njit(cache=True, nogil=True)
def queue_chain_chunk(q, counts, meta, lam, p, u_type, u_target, picks, samples_q, samples_v1):
    """Run one chunk of the station-level embedded chain.

    Per event: ``u_type`` selects arrival / local token / central token;
    ``u_target`` selects the station (or the index into the longest-queue
    set for central tokens).  At sampling epochs, ``picks`` selects a station
    whose length is recorded along with the total task count.
    """
    n = q.shape[0]
    cap = counts.shape[0]
    thr_arr = lam / (1.0 + lam)
    thr_loc = (lam + 1.0 - p) / (1.0 + lam)
    maxlen = meta[META_TOP]
    total = meta[META_TOTAL]
    step = meta[META_STEP]
    cursor = meta[META_CURSOR]
    nxt = meta[META_NEXT]
    spacing = meta[META_SPACING]
    n_samples = samples_q.shape[0]

    for e in range(u_type.shape[0]):
        u = u_type[e]
        if u < thr_arr:
            st = int(u_target[e] * n)
            k = q[st]
            if k + 1 >= cap:
                return 1
            q[st] = k + 1
            counts[k] -= 1
            counts[k + 1] += 1
            total += 1
            if k + 1 > maxlen:
                maxlen = k + 1
        elif u < thr_loc:
            st = int(u_target[e] * n)
            k = q[st]
            if k > 0:
                q[st] = k - 1
                counts[k] -= 1
                counts[k - 1] += 1
                total -= 1
                if k == maxlen and counts[k] == 0:
                    maxlen -= 1
        else:
            if total > 0:
                ties = counts[maxlen]
                j = int(u_target[e] * ties)
                st = -1
                seen = 0
                for cand in range(n):
                    if q[cand] == maxlen:
                        if seen == j:
                            st = cand
                            break
                        seen += 1
                q[st] = maxlen - 1
                counts[maxlen] -= 1
                counts[maxlen - 1] += 1
                total -= 1
                if counts[maxlen] == 0:
                    maxlen -= 1
        step += 1
        if step == nxt and cursor < n_samples:
            st = int(picks[cursor] * n)
            samples_q[cursor] = q[st]
            samples_v1[cursor] = total
            cursor += 1
            nxt += spacing

    meta[META_TOP] = maxlen
    meta[META_TOTAL] = total
    meta[META_STEP] = step
    meta[META_CURSOR] = cursor
    meta[META_NEXT] = nxt
    return 0


@njit(cache=True, nogil=True)
def aggregate_chain_chunk(K, meta, lam, p, n, u_event, picks, samples_q, samples_v1):
    """Run one chunk of the aggregate embedded chain (single draw per event).

    ``K[i]`` holds the integer count ``N * v_i``; ``K[0] == K[1] + n`` is
    maintained.  The unit interval is partitioned into arrival sub-intervals
    of width ``lam/(1+lam) * s_{i-1}``, local sub-intervals of width
    ``(1-p)/(1+lam) * s_i``, and the central region of width ``p/(1+lam)``;
    a single uniform draw picks the event and the affected coordinates.
    """
    cap = K.shape[0]
    thr_arr = lam / (1.0 + lam)
    loc_width = (1.0 - p) / (1.0 + lam)
    support = meta[META_TOP]
    step = meta[META_STEP]
    cursor = meta[META_CURSOR]
    nxt = meta[META_NEXT]
    spacing = meta[META_SPACING]
    n_samples = samples_q.shape[0]

    for e in range(u_event.shape[0]):
        u = u_event[e]
        if u < thr_arr:
            # arrival to a station with at least i-1 tasks, for every i <= J
            xn = (u / thr_arr) * n
            J = 1
            i = 2
            while i < cap - 1 and K[i - 1] - K[i] > xn:
                J = i
                i += 1
            if J + 2 >= cap:
                return 1
            for i in range(1, J + 1):
                K[i] += 1
            if J > support:
                support = J
            K[0] = K[1] + n
        elif u < thr_arr + loc_width:
            # local token at a station with at least i tasks, for every i <= M
            yn = ((u - thr_arr) / loc_width) * n
            M = 0
            i = 1
            while i < cap - 1 and K[i] - K[i + 1] > yn:
                M = i
                i += 1
            if M >= 1:
                for i in range(1, M + 1):
                    K[i] -= 1
                if K[support] == 0:
                    support -= 1
                K[0] = K[1] + n
        else:
            # central token serves a longest queue: all coordinates up to the support
            if support >= 1:
                for i in range(1, support + 1):
                    K[i] -= 1
                if K[support] == 0:
                    support -= 1
                K[0] = K[1] + n
        step += 1
        if step == nxt and cursor < n_samples:
            t = picks[cursor] * n
            length = 0
            i = 1
            while i < cap - 1 and K[i] - K[i + 1] > t:
                length = i
                i += 1
            samples_q[cursor] = length
            samples_v1[cursor] = K[1]
            cursor += 1
            nxt += spacing

    meta[META_TOP] = support
    meta[META_TOTAL] = K[1]
    meta[META_STEP] = step
    meta[META_CURSOR] = cursor
    meta[META_NEXT] = nxt
    return 0
