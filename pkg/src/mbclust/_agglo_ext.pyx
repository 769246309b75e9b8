# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled agglomeration kernel.

Mirrors ``_agglo_py.agglomerate`` expression by expression; the two must
produce bit-identical merge sequences. Build with ``-ffp-contract=off`` so the
compiler does not fuse multiply-adds.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, INFINITY, isfinite

cnp.import_array()


cdef inline bint _less(long t1, double c1, long lo1, long hi1,
                       long t2, double c2, long lo2, long hi2) nogil:
    if t1 != t2:
        return t1 < t2
    if c1 != c2:
        return c1 < c2
    if lo1 != lo2:
        return lo1 < lo2
    return hi1 < hi2


cdef double _chol_logdet(double[:, ::1] s, double[:, ::1] low, double floor_rel,
                         double scale, bint* ok) nogil:
    """Cholesky of ``s`` (lower triangle). Returns sum(log pivot).

    ``ok`` is cleared if any pivot is <= ``floor_rel * scale`` (or <= 0).
    """
    cdef Py_ssize_t q = s.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double d, t, root, acc = 0.0
    ok[0] = True
    for j in range(q):
        d = s[j, j]
        for k in range(j):
            d = d - low[j, k] * low[j, k]
        if not (d > floor_rel * scale) or not (d > 0.0):
            ok[0] = False
            return INFINITY
        root = sqrt(d)
        low[j, j] = root
        for i in range(j + 1, q):
            t = s[i, j]
            for k in range(j):
                t = t - low[i, k] * low[j, k]
            low[i, j] = t / root
        acc += log(d)
    return acc


cdef class _State:
    cdef Py_ssize_t n, q
    cdef double ridge, sing_rel
    cdef long[::1] ids
    cdef double[::1] count
    cdef double[:, ::1] mean
    cdef double[:, :, ::1] scatter
    cdef char[::1] big
    cdef double[::1] term
    cdef char[::1] active
    cdef long[::1] best_tier
    cdef double[::1] best_cost
    cdef long[::1] best_slot
    cdef double[:, ::1] s
    cdef double[:, ::1] low
    cdef double[::1] d

    def __init__(self, const double[:, ::1] z, double ridge, double sing_rel):
        n = z.shape[0]
        q = z.shape[1]
        self.n = n
        self.q = q
        self.ridge = ridge
        self.sing_rel = sing_rel
        self.ids = np.arange(n, dtype=np.int_)
        self.count = np.ones(n)
        self.mean = np.array(z, dtype=np.float64, copy=True)
        self.scatter = np.zeros((n, q, q))
        self.big = np.zeros(n, dtype=np.int8)
        self.term = np.zeros(n)
        self.active = np.ones(n, dtype=np.int8)
        self.best_tier = np.zeros(n, dtype=np.int_)
        self.best_cost = np.full(n, np.inf)
        self.best_slot = np.full(n, -1, dtype=np.int_)
        self.s = np.zeros((q, q))
        self.low = np.zeros((q, q))
        self.d = np.zeros(q)

    cdef void classify(self, Py_ssize_t slot) nogil:
        cdef Py_ssize_t q = self.q
        cdef Py_ssize_t i, j
        cdef double nk = self.count[slot]
        cdef double scale = 0.0
        cdef double ld
        cdef bint ok
        self.big[slot] = 0
        self.term[slot] = 0.0
        if nk <= q:
            return
        for i in range(q):
            for j in range(q):
                self.s[i, j] = self.scatter[slot, i, j] / nk
            if i == 0 or self.s[i, i] > scale:
                scale = self.s[i, i]
        if not (scale > 0.0):
            return
        _chol_logdet(self.s, self.low, self.sing_rel, scale, &ok)
        if not ok:
            return
        for i in range(q):
            self.s[i, i] = self.s[i, i] + self.ridge
        ld = _chol_logdet(self.s, self.low, 0.0, 0.0, &ok)
        if not ok or not isfinite(ld):
            return
        self.big[slot] = 1
        self.term[slot] = nk * ld

    cdef void pair(self, Py_ssize_t j, Py_ssize_t x, long* tier, double* cost) nogil:
        cdef Py_ssize_t q = self.q
        cdef Py_ssize_t c, r
        cdef double na = self.count[j]
        cdef double nb = self.count[x]
        cdef double f = (na * nb) / (na + nb)
        cdef double acc = 0.0
        cdef double nab, ld, t_lo, t_hi
        cdef bint ok
        for c in range(q):
            self.d[c] = self.mean[j, c] - self.mean[x, c]
        for c in range(q):
            acc = acc + self.d[c] * self.d[c]
        if not (self.big[j] and self.big[x]):
            tier[0] = 0
            cost[0] = f * acc
            return
        tier[0] = 1
        nab = na + nb
        for r in range(q):
            for c in range(r + 1):
                self.s[r, c] = ((self.scatter[j, r, c] + self.scatter[x, r, c])
                                + (f * self.d[c]) * self.d[r]) / nab
            self.s[r, r] = self.s[r, r] + self.ridge
        ld = _chol_logdet(self.s, self.low, 0.0, 0.0, &ok)
        if not ok or not isfinite(ld):
            cost[0] = INFINITY
            return
        if self.ids[j] < self.ids[x]:
            t_lo = self.term[j]
            t_hi = self.term[x]
        else:
            t_lo = self.term[x]
            t_hi = self.term[j]
        cost[0] = (nab * ld - t_lo) - t_hi

    cdef void refresh(self, Py_ssize_t j) nogil:
        cdef Py_ssize_t x
        cdef long t, bt = 0
        cdef double c, bc = INFINITY
        cdef long bs = -1
        cdef long jid = self.ids[j]
        cdef long xid, bid = 0
        for x in range(self.n):
            if not self.active[x] or x == j:
                continue
            self.pair(j, x, &t, &c)
            xid = self.ids[x]
            if bs < 0 or _less(t, c, min(jid, xid), max(jid, xid),
                               bt, bc, min(jid, bid), max(jid, bid)):
                bt = t
                bc = c
                bs = x
                bid = xid
        self.best_tier[j] = bt
        self.best_cost[j] = bc
        self.best_slot[j] = bs


def agglomerate(z, double ridge, double sing_rel):
    """See ``_agglo_py.agglomerate``."""
    cdef const double[:, ::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t n = zz.shape[0]
    cdef Py_ssize_t q = zz.shape[1]
    left_arr = np.empty(max(n - 1, 0), dtype=np.int64)
    right_arr = np.empty(max(n - 1, 0), dtype=np.int64)
    cost_arr = np.empty(max(n - 1, 0))
    tier_arr = np.empty(max(n - 1, 0), dtype=np.int8)
    if n < 2:
        return left_arr, right_arr, cost_arr, tier_arr
    cdef long[::1] left = left_arr
    cdef long[::1] right = right_arr
    cdef double[::1] costs = cost_arr
    cdef signed char[::1] tiers = tier_arr
    cdef _State st = _State(zz, ridge, sing_rel)
    cdef Py_ssize_t step, j, x, sa, sb, slo, shi, r, c
    cdef long ida, idb, cid, jid, pid, bt, t
    cdef double bc, na, nb, nab, f, cst
    cdef long blo, bhi, lo, hi

    with nogil:
        for j in range(n):
            st.classify(j)
        for j in range(n):
            st.refresh(j)

        for step in range(n - 1):
            sa = -1
            for j in range(n):
                if not st.active[j]:
                    continue
                x = st.best_slot[j]
                lo = min(st.ids[j], st.ids[x])
                hi = max(st.ids[j], st.ids[x])
                if sa < 0 or _less(st.best_tier[j], st.best_cost[j], lo, hi, bt, bc, blo, bhi):
                    sa = j
                    bt = st.best_tier[j]
                    bc = st.best_cost[j]
                    blo = lo
                    bhi = hi
            sb = st.best_slot[sa]
            ida = st.ids[sa]
            idb = st.ids[sb]
            left[step] = min(ida, idb)
            right[step] = max(ida, idb)
            costs[step] = bc
            tiers[step] = <signed char>bt
            if step == n - 2:
                break

            if ida < idb:
                slo = sa
                shi = sb
            else:
                slo = sb
                shi = sa
            na = st.count[slo]
            nb = st.count[shi]
            nab = na + nb
            f = (na * nb) / nab
            for c in range(q):
                st.d[c] = st.mean[slo, c] - st.mean[shi, c]
            for r in range(q):
                for c in range(r + 1):
                    st.s[r, c] = (st.scatter[slo, r, c] + st.scatter[shi, r, c]) + (f * st.d[c]) * st.d[r]
            for r in range(q):
                for c in range(r + 1):
                    st.scatter[sa, r, c] = st.s[r, c]
                    st.scatter[sa, c, r] = st.s[r, c]
            for c in range(q):
                st.mean[sa, c] = (na * st.mean[slo, c] + nb * st.mean[shi, c]) / nab
            st.active[sb] = 0
            cid = n + step
            st.ids[sa] = cid
            st.count[sa] = nab
            st.classify(sa)

            # new row, then patch the rest
            st.refresh(sa)
            for j in range(n):
                if not st.active[j] or j == sa:
                    continue
                if st.best_slot[j] == sa or st.best_slot[j] == sb:
                    st.refresh(j)
                    continue
                st.pair(j, sa, &t, &cst)
                jid = st.ids[j]
                pid = st.ids[st.best_slot[j]]
                if _less(t, cst, min(jid, cid), max(jid, cid),
                         st.best_tier[j], st.best_cost[j], min(jid, pid), max(jid, pid)):
                    st.best_tier[j] = t
                    st.best_cost[j] = cst
                    st.best_slot[j] = sa
    return left_arr, right_arr, cost_arr, tier_arr
