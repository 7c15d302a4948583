"""Compiled event loop; same rules, tie-breaks and draw order as :mod:`cascade.model`.

Schedule rows of ``sched``: 0 next arrival, 1 service end, 2 overflow work,
3 overflow work done, 4 overflow stint start. Overflow arrays are indexed by
source station and have length ``k`` (last slot unused).
"""
import numpy as np
from numba import njit

DONE = 0
REFILL = 1
CAP = 2
FAULT = 3

_INF = np.inf


@njit(cache=True)
def accumulate(t0, t1, q, ov, c, cur_bin, bin_width, duration, busy, queue_area, levels,
               busy_ov, j_time, k_time, q_snapshot):
    k = q.shape[0]
    nb = duration.shape[0]
    cap = levels.shape[2] - 1
    b = cur_bin[0]
    while True:
        if b < nb - 1:
            edge = (b + 1) * bin_width
        else:
            edge = _INF
        last = t1 <= edge
        seg_end = t1 if last else edge
        dt = seg_end - t0
        if dt > 0.0:
            duration[b] += dt
            for i in range(k):
                n = q[i]
                if n > 0:
                    busy[b, i] += dt
                queue_area[b, i] += n * dt
                levels[b, i, min(n, cap)] += dt
            for i in range(k - 1):
                if q[i + 1] == 0:
                    if ov[i] == 1:
                        busy_ov[b, i] += dt
                    if q[i] > c[i]:
                        j_time[b, i] += dt
                if q[i] <= c[i]:
                    k_time[b, i] += dt
        for i in range(k):
            q_snapshot[b, i] = q[i]
        if last:
            break
        t0 = seg_end
        b += 1
    cur_bin[0] = b


@njit(cache=True)
def advance(until, max_events, c, q, ov, sched, clock, cur_bin, n_events, buffers, positions,
            bin_width, duration, busy, queue_area, levels, busy_ov, j_time, k_time, q_snapshot,
            arrivals, departures, transfers, ov_departures, check):
    k = q.shape[0]
    nstreams = positions.shape[0]
    block = buffers.shape[1]
    while True:
        for j in range(nstreams):
            if positions[j] >= block:
                return REFILL

        # next event: service < overflow < arrival, then lower station
        best = _INF
        kind = -1
        st = 0
        for i in range(k):
            if q[i] > 0 and sched[1, i] < best:
                best = sched[1, i]
                kind = 0
                st = i
        for i in range(k - 1):
            if ov[i] == 1 and q[i + 1] == 0:
                end = sched[4, i] + (sched[2, i] - sched[3, i])
                if end < best:
                    best = end
                    kind = 1
                    st = i
        for i in range(k):
            if sched[0, i] < best:
                best = sched[0, i]
                kind = 2
                st = i

        if best > until:
            accumulate(clock[0], until, q, ov, c, cur_bin, bin_width, duration, busy, queue_area,
                       levels, busy_ov, j_time, k_time, q_snapshot)
            clock[0] = until
            return DONE
        if n_events[0] >= max_events:
            return CAP

        t = best
        accumulate(clock[0], t, q, ov, c, cur_bin, bin_width, duration, busy, queue_area,
                   levels, busy_ov, j_time, k_time, q_snapshot)
        clock[0] = t
        b = cur_bin[0]
        i = st
        if kind == 2:
            j = 3 * i
            sched[0, i] = t + buffers[j, positions[j]]
            positions[j] += 1
            if q[i] == 0:
                j = 3 * i + 1
                sched[1, i] = t + buffers[j, positions[j]]
                positions[j] += 1
                if i >= 1 and ov[i - 1] == 1:
                    sched[3, i - 1] += t - sched[4, i - 1]
            q[i] += 1
            arrivals[b, i] += 1
        elif kind == 0:
            q[i] -= 1
            departures[b, i] += 1
            if q[i] > 0:
                j = 3 * i + 1
                sched[1, i] = t + buffers[j, positions[j]]
                positions[j] += 1
            else:
                sched[1, i] = _INF
                if i >= 1 and ov[i - 1] == 1:
                    sched[4, i - 1] = t
        else:
            ov[i] = 0
            sched[2, i] = 0.0
            sched[3, i] = 0.0
            ov_departures[b, i] += 1

        changed = True
        while changed:
            changed = False
            for i in range(k - 1):
                if q[i] > c[i] and q[i + 1] == 0 and ov[i] == 0:
                    q[i] -= 1
                    ov[i] = 1
                    j = 3 * i + 2
                    sched[2, i] = buffers[j, positions[j]]
                    positions[j] += 1
                    sched[3, i] = 0.0
                    sched[4, i] = t
                    transfers[b, i] += 1
                    changed = True
        n_events[0] += 1

        if check:
            for i in range(k):
                if q[i] < 0 or (q[i] > 0) != (sched[1, i] != _INF):
                    return FAULT
            for i in range(k - 1):
                if ov[i] < 0 or ov[i] > 1:
                    return FAULT
                if q[i] > c[i] and q[i + 1] == 0 and ov[i] == 0:
                    return FAULT
