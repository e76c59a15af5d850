# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled slot loop.  Semantics are defined by ``_kernel_py.run_chunk``."""

from libc.math cimport pow, sqrt

cdef enum:
    N_FIXED = 7
    MAXN = 64

cdef enum:
    STAT = 0
    U = 1
    U2 = 2
    CROSS = 3
    SERV = 4
    SAT = 5
    STAT2 = 6

cdef enum:
    FIXED = 0
    JSQ = 1
    RANDOM = 2
    MAXWEIGHT = 3


def run_chunk(long long[::1] q, int policy,
              long long[:, ::1] arrivals, long long[:, ::1] service,
              double[:, ::1] ties, long long[:, ::1] schedules,
              long long[::1] on_face, double[::1] c, long long[::1] c_int,
              double[::1] orders, double[:, ::1] sums, long long[::1] hist,
              double[::1] buf, long long[::1] counters, long long[::1] sched_counts,
              long long start, long long t0, long long burn_in, long long batch_len,
              long long record_stride, long long guard):
    cdef Py_ssize_t n = q.shape[0]
    cdef Py_ssize_t rows = arrivals.shape[0]
    cdef Py_ssize_t n_batches = sums.shape[1]
    cdef Py_ssize_t hist_len = hist.shape[0]
    cdef Py_ssize_t buf_len = buf.shape[0]
    cdef Py_ssize_t n_orders = orders.shape[0]
    cdef Py_ssize_t n_sched = schedules.shape[0]
    cdef bint hist_mode = hist_len > 0
    cdef long long violations = counters[0]
    cdef long long fill = counters[1]

    if n > MAXN:
        raise ValueError("compiled kernel supports at most 64 queues")

    cdef long long qs[MAXN]
    cdef long long a[MAXN]
    cdef long long s[MAXN]
    cdef long long us[MAXN]
    cdef long long nxt[MAXN]
    cdef Py_ssize_t j, k, r_i, i, m, pick
    cdef long long t, rel, kb, istat = 0, low, top, w, total, diff
    cdef double stat = 0.0, ustat, qnext, serv, cc = 0.0, sq, p2, perp
    cdef bint post
    cdef int status = 0
    cdef Py_ssize_t k_sched

    for j in range(n):
        qs[j] = q[j]
        cc += c[j] * c[j]

    i = start
    while i < rows:
        t = t0 + i
        post = t >= burn_in
        if post:
            stat = 0.0
            for j in range(n):
                stat += c[j] * qs[j]
            if hist_mode:
                istat = 0
                for j in range(n):
                    istat += c_int[j] * qs[j]
                if istat >= hist_len:
                    status = 1
                    break

        k_sched = -1
        if policy == FIXED:
            for j in range(n):
                a[j] = arrivals[i, j]
                s[j] = service[i, j]
        elif policy == JSQ:
            low = qs[0]
            for j in range(n):
                a[j] = 0
                s[j] = service[i, j]
                if qs[j] < low:
                    low = qs[j]
            m = 0
            for j in range(n):
                if qs[j] == low:
                    m += 1
            pick = <Py_ssize_t>(ties[i, 0] * m)
            for j in range(n):
                if qs[j] == low:
                    if pick == 0:
                        a[j] = arrivals[i, 0]
                        break
                    pick -= 1
        elif policy == RANDOM:
            for j in range(n):
                a[j] = 0
                s[j] = service[i, j]
            total = arrivals[i, 0]
            for k in range(total):
                a[<Py_ssize_t>(ties[i, k] * n)] += 1
        else:
            top = 0
            for k in range(n_sched):
                w = 0
                for j in range(n):
                    w += qs[j] * schedules[k, j]
                if k == 0 or w > top:
                    top = w
            m = 0
            for k in range(n_sched):
                w = 0
                for j in range(n):
                    w += qs[j] * schedules[k, j]
                if w == top:
                    m += 1
            pick = <Py_ssize_t>(ties[i, 0] * m)
            for k in range(n_sched):
                w = 0
                for j in range(n):
                    w += qs[j] * schedules[k, j]
                if w == top:
                    if pick == 0:
                        k_sched = k
                        break
                    pick -= 1
            for j in range(n):
                a[j] = arrivals[i, j]
                s[j] = schedules[k_sched, j]

        for j in range(n):
            diff = s[j] - a[j] - qs[j]
            us[j] = diff if diff > 0 else 0
            nxt[j] = qs[j] + a[j] - s[j] + us[j]
            if us[j] > 0 and nxt[j] > 0:
                violations += 1

        if post:
            rel = t - burn_in
            kb = rel // batch_len
            if kb >= n_batches:
                kb = n_batches - 1
            ustat = 0.0
            qnext = 0.0
            serv = 0.0
            for j in range(n):
                ustat += c[j] * us[j]
            for j in range(n):
                qnext += c[j] * nxt[j]
            for j in range(n):
                serv += c[j] * s[j]
            sums[STAT, kb] += stat
            sums[STAT2, kb] += stat * stat
            sums[U, kb] += ustat
            sums[U2, kb] += ustat * ustat
            sums[CROSS, kb] += ustat * qnext
            sums[SERV, kb] += serv
            if k_sched >= 0:
                sched_counts[k_sched] += 1
                if on_face[k_sched]:
                    sums[SAT, kb] += 1.0
            if n_orders > 0:
                sq = 0.0
                for j in range(n):
                    sq += <double>(qs[j] * qs[j])
                p2 = sq - stat * stat / cc
                perp = sqrt(p2) if p2 > 0.0 else 0.0
                for r_i in range(n_orders):
                    sums[N_FIXED + r_i, kb] += pow(perp, orders[r_i])
            if rel % record_stride == 0:
                if hist_mode:
                    hist[istat] += 1
                elif fill < buf_len:
                    buf[fill] = stat
                    fill += 1

        for j in range(n):
            qs[j] = nxt[j]
        i += 1
        top = qs[0]
        for j in range(n):
            if qs[j] > top:
                top = qs[j]
        if top > guard:
            status = 2
            break

    for j in range(n):
        q[j] = qs[j]
    counters[0] = violations
    counters[1] = fill
    return i, status
