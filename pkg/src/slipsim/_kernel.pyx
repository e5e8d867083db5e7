# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loop for the unit-agent market.

Mirror of ``_kernel_py.advance``; both must evaluate every floating point
expression in the same order so the two backends stay bit-identical.  Array
layout and status codes are documented in ``slipsim.kernel``.
"""

from libc.stdint cimport int64_t


cdef inline bint _beats(double e, int64_t arr, int64_t aid,
                        double be, int64_t barr, int64_t bid) noexcept nogil:
    if e != be:
        return e > be
    if arr != barr:
        return arr < barr
    return aid < bid


cdef inline Py_ssize_t _leader(int64_t[::1] side, int64_t[::1] ids, int64_t[::1] arrival,
                               double[::1] eps, Py_ssize_t n, int64_t which) noexcept nogil:
    cdef Py_ssize_t k, best = -1
    for k in range(n):
        if side[k] == which:
            if best < 0 or _beats(eps[k], arrival[k], ids[k], eps[best], arrival[best], ids[best]):
                best = k
    return best


def advance(
    int64_t[::1] side, int64_t[::1] ids, int64_t[::1] arrival,
    double[::1] eps, double[::1] ref, double[::1] cash,
    const int64_t[::1] sel, const double[::1] z, const double[::1] u,
    int64_t[::1] counters, double[::1] price,
    double mu, double sigma, int64_t target, int64_t idle_cap,
    int64_t[:, ::1] trade_i, double[:, ::1] trade_f,
    int64_t[:, ::1] exec_i, double[:, ::1] exec_f,
    int64_t[:, ::1] arr_i, double[::1] arr_f,
):
    cdef Py_ssize_t n = side.shape[0]
    cdef Py_ssize_t nsel = sel.shape[0], nz = z.shape[0], nu = u.shape[0]
    cdef int64_t t = counters[0], next_id = counters[1]
    cdef Py_ssize_t sp = counters[2], zp = counters[3], up = counters[4]
    cdef int64_t idle = counters[5], events = counters[6]
    cdef Py_ssize_t ne = counters[7], na = counters[8]
    cdef double P = price[0]
    cdef Py_ssize_t j, k, m, bb, bs, slot, lo, hi, r
    cdef int64_t nb = 0, ns, s, tot
    cdef double old, eb, es, newp, dp, sdw, wb, wa, ca, p_buy
    cdef int status = 0

    for k in range(n):
        if side[k] < 0:
            nb += 1
    bb = _leader(side, ids, arrival, eps, n, -1)
    bs = _leader(side, ids, arrival, eps, n, 1)

    with nogil:
        while t < target:
            if sp >= nsel:
                status = 1
                break
            if zp + 3 > nz:
                status = 2
                break
            if up + 2 > nu:
                status = 3
                break
            if idle >= idle_cap:
                status = 4
                break
            events += 1
            idle += 1

            j = sel[sp]
            sp += 1
            old = eps[j]
            eps[j] = mu + sigma * z[zp]
            zp += 1

            # only slot j changed: its side's leader is j, the old leader, or
            # (if the leader itself dropped) found by a rescan
            if side[j] < 0:
                if j == bb:
                    if eps[j] < old:
                        bb = _leader(side, ids, arrival, eps, n, -1)
                elif _beats(eps[j], arrival[j], ids[j], eps[bb], arrival[bb], ids[bb]):
                    bb = j
            else:
                if j == bs:
                    if eps[j] < old:
                        bs = _leader(side, ids, arrival, eps, n, 1)
                elif _beats(eps[j], arrival[j], ids[j], eps[bs], arrival[bs], ids[bs]):
                    bs = j
            eb = eps[bb]
            es = eps[bs]
            if not (eb + es >= 0.0):
                continue

            idle = 0
            newp = P + (eb - es) / 2.0
            dp = newp - P
            ns = n - nb

            # sum of wealth changes over everyone present before the trade
            sdw = 0.0
            for k in range(n):
                wb = side[k] * P + cash[k]
                if k == bb:
                    ca = cash[k] - 1 * newp
                    wa = 0 * newp + ca
                elif k == bs:
                    ca = cash[k] + 1 * newp
                    wa = 0 * newp + ca
                else:
                    wa = side[k] * newp + cash[k]
                sdw += wa - wb

            t += 1
            r = t - 1
            trade_i[r, 0] = ids[bb]
            trade_i[r, 1] = ids[bs]
            trade_i[r, 2] = nb
            trade_i[r, 3] = ns
            trade_f[r, 0] = newp
            trade_f[r, 1] = dp
            trade_f[r, 2] = sdw + (nb - ns) * dp
            trade_f[r, 3] = eb
            trade_f[r, 4] = es

            for m in range(2):
                slot = bb if m == 0 else bs
                exec_i[ne, 0] = ids[slot]
                exec_i[ne, 1] = side[slot]
                exec_i[ne, 2] = arrival[slot]
                exec_i[ne, 3] = t
                exec_f[ne, 0] = ref[slot]
                exec_f[ne, 1] = newp
                ne += 1

            P = newp
            nb -= 1
            ns -= 1
            lo = bb if bb < bs else bs
            hi = bs if bb < bs else bb
            for m in range(2):
                slot = lo if m == 0 else hi
                tot = nb + ns
                if tot > 0:
                    p_buy = <double>ns / <double>tot
                else:
                    p_buy = 0.5
                if u[up] < p_buy:
                    s = -1
                    nb += 1
                else:
                    s = 1
                    ns += 1
                up += 1
                side[slot] = s
                ids[slot] = next_id
                next_id += 1
                arrival[slot] = t
                ref[slot] = newp
                cash[slot] = (-s) * newp
                eps[slot] = mu + sigma * z[zp]
                zp += 1
                arr_i[na, 0] = ids[slot]
                arr_i[na, 1] = s
                arr_i[na, 2] = t
                arr_f[na] = newp
                na += 1
            bb = _leader(side, ids, arrival, eps, n, -1)
            bs = _leader(side, ids, arrival, eps, n, 1)

    counters[0] = t
    counters[1] = next_id
    counters[2] = sp
    counters[3] = zp
    counters[4] = up
    counters[5] = idle
    counters[6] = events
    counters[7] = ne
    counters[8] = na
    price[0] = P
    return status
