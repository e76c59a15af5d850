"""Pure-Python slot loop, used when the compiled extension is unavailable.

Mirrors ``_kernel.pyx`` statement for statement; the two must produce
identical accumulators for identical inputs.
"""

from .control import jsq_choice, maxweight_choice, random_targets
from .dynamics import step_queue

# accumulator rows
STAT, U, U2, CROSS, SERV, SAT, STAT2 = range(7)
N_FIXED = 7

# policy codes
FIXED, JSQ, RANDOM, MAXWEIGHT = 0, 1, 2, 3

# status codes
DONE, HIST_FULL, DIVERGED = 0, 1, 2


def run_chunk(q, policy, arrivals, service, ties, schedules, on_face, c, c_int, orders,
              sums, hist, buf, counters, sched_counts,
              start, t0, burn_in, batch_len, record_stride, guard):
    n = q.shape[0]
    rows = arrivals.shape[0]
    n_batches = sums.shape[1]
    hist_mode = hist.shape[0] > 0
    hist_len = hist.shape[0]
    buf_len = buf.shape[0]

    qs = [int(x) for x in q]
    cs = [float(x) for x in c]
    ci = [int(x) for x in c_int]
    cc = sum(x * x for x in cs)
    ords = [float(r) for r in orders]
    A = arrivals.tolist()
    S = service.tolist() if policy != MAXWEIGHT else None
    W = ties.tolist()
    sched = schedules.tolist()
    face = on_face.tolist()
    acc = sums.tolist()
    h = hist.tolist()
    violations = int(counters[0])
    fill = int(counters[1])
    scount = sched_counts.tolist()

    status = DONE
    i = start
    while i < rows:
        t = t0 + i
        post = t >= burn_in
        if post:
            stat = sum(cq * qq for cq, qq in zip(cs, qs))
            if hist_mode:
                istat = sum(a * b for a, b in zip(ci, qs))
                if istat >= hist_len:
                    status = HIST_FULL
                    break

        # control decision from the pre-slot state
        k_sched = -1
        if policy == FIXED:
            a = A[i]
            s = S[i]
        elif policy == JSQ:
            a = [0] * n
            a[jsq_choice(qs, W[i][0])] = A[i][0]
            s = S[i]
        elif policy == RANDOM:
            a = [0] * n
            for k in random_targets(W[i][:A[i][0]], n):
                a[k] += 1
            s = S[i]
        else:
            k_sched = maxweight_choice(qs, sched, W[i][0])
            a = A[i]
            s = sched[k_sched]

        nxt = [0] * n
        us = [0] * n
        for j in range(n):
            nxt[j], us[j] = step_queue(qs[j], a[j], s[j])
            if us[j] > 0 and nxt[j] > 0:
                violations += 1

        if post:
            rel = t - burn_in
            kb = rel // batch_len
            if kb >= n_batches:
                kb = n_batches - 1
            ustat = sum(x * y for x, y in zip(cs, us))
            qnext = sum(x * y for x, y in zip(cs, nxt))
            serv = sum(x * y for x, y in zip(cs, s))
            acc[STAT][kb] += stat
            acc[STAT2][kb] += stat * stat
            acc[U][kb] += ustat
            acc[U2][kb] += ustat * ustat
            acc[CROSS][kb] += ustat * qnext
            acc[SERV][kb] += serv
            if k_sched >= 0:
                scount[k_sched] += 1
                if face[k_sched]:
                    acc[SAT][kb] += 1.0
            if ords:
                sq = sum(x * x for x in qs)
                p2 = sq - stat * stat / cc
                perp = p2 ** 0.5 if p2 > 0.0 else 0.0
                for r_i, r in enumerate(ords):
                    acc[N_FIXED + r_i][kb] += perp ** r
            if rel % record_stride == 0:
                if hist_mode:
                    h[istat] += 1
                elif fill < buf_len:
                    buf[fill] = stat
                    fill += 1

        qs = nxt
        i += 1
        if max(qs) > guard:
            status = DIVERGED
            break

    for j in range(n):
        q[j] = qs[j]
    sums[:, :] = acc
    if hist_mode:
        hist[:] = h
    counters[0] = violations
    counters[1] = fill
    sched_counts[:] = scount
    return i, status
