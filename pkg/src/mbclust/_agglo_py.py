"""Pure numpy agglomeration kernel (fallback for the compiled ``_agglo_ext``).

Both kernels evaluate every floating-point expression in the same order so
that the merge sequences they produce are bit-identical. Keep them in sync.

Merge cost of clusters ``lo < hi`` (by cluster id):

* tier 0, used when either cluster is small (``n_k <= q``) or has a
  numerically singular scatter matrix::

      f * sum_c (m_lo[c] - m_hi[c])**2,   f = n_lo * n_hi / (n_lo + n_hi)

* tier 1, both clusters large and nonsingular::

      (n_ab * ld(W_ab / n_ab + ridge I) - T_lo) - T_hi,   T_k = n_k * ld(W_k / n_k + ridge I)

Pairs are ordered by ``(tier, cost, lo, hi)``.
"""

from __future__ import annotations

import math

import numpy as np

_LOG = np.frompyfunc(math.log, 1, 1)


def _chol_pivots(s: np.ndarray) -> np.ndarray:
    """Squared Cholesky diagonals of a stack of symmetric matrices (lower triangle read).

    Non-positive pivots are returned as-is and poison later rows with NaN or
    garbage; callers reject any stack entry with a pivot <= 0.
    """
    m, q, _ = s.shape
    lower = np.zeros_like(s)
    piv = np.empty((m, q))
    for j in range(q):
        d = s[:, j, j].copy()
        for k in range(j):
            d = d - lower[:, j, k] * lower[:, j, k]
        piv[:, j] = d
        with np.errstate(invalid="ignore", divide="ignore"):
            root = np.sqrt(d)
            lower[:, j, j] = root
            for i in range(j + 1, q):
                t = s[:, i, j].copy()
                for k in range(j):
                    t = t - lower[:, i, k] * lower[:, j, k]
                lower[:, i, j] = t / root
    return piv


def _logdet_from_pivots(piv: np.ndarray) -> np.ndarray:
    ok = np.all(piv > 0.0, axis=1)
    out = np.full(piv.shape[0], np.inf)
    for r in np.flatnonzero(ok):
        acc = 0.0
        for v in piv[r]:
            acc += math.log(v)
        out[r] = acc
    return out


class _State:
    def __init__(self, z: np.ndarray, ridge: float, sing_rel: float):
        n, q = z.shape
        self.n, self.q = n, q
        self.ridge = ridge
        self.sing_rel = sing_rel
        self.ids = np.arange(n, dtype=np.int64)
        self.count = np.ones(n)
        self.mean = np.array(z, dtype=np.float64, copy=True)
        self.scatter = np.zeros((n, q, q))
        self.big = np.zeros(n, dtype=bool)
        self.term = np.zeros(n)
        self.active = np.ones(n, dtype=bool)
        self.best_tier = np.zeros(n, dtype=np.int64)
        self.best_cost = np.full(n, np.inf)
        self.best_slot = np.full(n, -1, dtype=np.int64)

    def classify(self, slot: int) -> None:
        """Decide whether ``slot`` is large/nonsingular and cache its log-det term."""
        q = self.q
        nk = self.count[slot]
        self.big[slot] = False
        self.term[slot] = 0.0
        if nk <= q:
            return
        cov = self.scatter[slot] / nk
        scale = float(np.max(np.diagonal(cov)))
        if not scale > 0.0:
            return
        piv = _chol_pivots(cov[None])[0]
        if not np.all(piv > self.sing_rel * scale):
            return
        reg = cov.copy()
        reg[np.diag_indices(q)] += self.ridge
        ld = _logdet_from_pivots(_chol_pivots(reg[None]))[0]
        if not math.isfinite(ld):
            return
        self.big[slot] = True
        self.term[slot] = nk * ld

    def row(self, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Tier and cost of merging slot ``j`` with every other active slot."""
        cand = np.flatnonzero(self.active)
        cand = cand[cand != j]
        q = self.q
        na = self.count[j]
        nb = self.count[cand]
        f = (na * nb) / (na + nb)
        d = self.mean[j] - self.mean[cand]
        acc = np.zeros(cand.size)
        for c in range(q):
            acc = acc + d[:, c] * d[:, c]
        cost = f * acc
        tier = np.where(self.big[j] & self.big[cand], 1, 0).astype(np.int64)
        sel = np.flatnonzero(tier == 1)
        if sel.size:
            cs = cand[sel]
            fs = f[sel]
            ds = d[sel]
            nab = na + nb[sel]
            fd = fs[:, None] * ds
            outer = fd[:, None, :] * ds[:, :, None]  # [m, i, j] = (f d_j) d_i
            s = (self.scatter[j][None] + self.scatter[cs]) + outer
            s = s / nab[:, None, None]
            idx = np.arange(q)
            s[:, idx, idx] += self.ridge
            ld = _logdet_from_pivots(_chol_pivots(s))
            jid = self.ids[j]
            cid = self.ids[cs]
            t_lo = np.where(jid < cid, self.term[j], self.term[cs])
            t_hi = np.where(jid < cid, self.term[cs], self.term[j])
            with np.errstate(invalid="ignore"):
                c1 = (nab * ld - t_lo) - t_hi
            cost[sel] = np.where(np.isfinite(ld), c1, np.inf)
        return cand, tier, cost

    def pick(self, slots: np.ndarray, partners: np.ndarray, tier: np.ndarray, cost: np.ndarray) -> int:
        """Index of the lexicographically smallest (tier, cost, lo, hi) entry."""
        a = self.ids[slots]
        b = self.ids[partners]
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        mask = tier == tier.min()
        cmin = cost[mask].min()
        mask &= cost == cmin
        if not mask.any():  # cmin is nan
            mask = tier == tier.min()
        lmin = lo[mask].min()
        mask &= lo == lmin
        hmin = hi[mask].min()
        mask &= hi == hmin
        return int(np.flatnonzero(mask)[0])

    def refresh(self, j: int) -> None:
        cand, tier, cost = self.row(j)
        k = self.pick(np.full(cand.size, j), cand, tier, cost)
        self.best_tier[j] = tier[k]
        self.best_cost[j] = cost[k]
        self.best_slot[j] = cand[k]


def _less(t1, c1, lo1, hi1, t2, c2, lo2, hi2) -> bool:
    return (t1, c1, lo1, hi1) < (t2, c2, lo2, hi2)


def agglomerate(z: np.ndarray, ridge: float, sing_rel: float):
    """Greedy agglomeration of the rows of ``z`` starting from singletons.

    Returns ``(left, right, cost, tier)`` arrays of length ``n - 1``. Leaves
    have ids ``0..n-1``; the cluster formed at step ``t`` gets id ``n + t``.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    n = z.shape[0]
    left = np.empty(n - 1, dtype=np.int64)
    right = np.empty(n - 1, dtype=np.int64)
    costs = np.empty(n - 1)
    tiers = np.empty(n - 1, dtype=np.int8)
    if n < 2:
        return left, right, costs, tiers
    st = _State(z, ridge, sing_rel)
    for j in range(n):
        st.classify(j)
    for j in range(n):
        st.refresh(j)

    for step in range(n - 1):
        act = np.flatnonzero(st.active)
        k = st.pick(act, st.best_slot[act], st.best_tier[act], st.best_cost[act])
        sa = int(act[k])
        sb = int(st.best_slot[sa])
        ida, idb = int(st.ids[sa]), int(st.ids[sb])
        left[step], right[step] = min(ida, idb), max(ida, idb)
        costs[step] = st.best_cost[sa]
        tiers[step] = st.best_tier[sa]
        if step == n - 2:
            break

        # merged cluster takes slot sa; statistics use the canonical (lo, hi) order
        slo, shi = (sa, sb) if ida < idb else (sb, sa)
        na, nb = st.count[slo], st.count[shi]
        nab = na + nb
        f = (na * nb) / nab
        d = st.mean[slo] - st.mean[shi]
        new_mean = (na * st.mean[slo] + nb * st.mean[shi]) / nab
        fd = f * d
        outer = fd[None, :] * d[:, None]  # [i, j] = (f d_j) d_i
        w = (st.scatter[slo] + st.scatter[shi]) + outer
        w = np.tril(w) + np.tril(w, -1).T
        st.active[sb] = False
        st.ids[sa] = n + step
        st.count[sa] = nab
        st.mean[sa] = new_mean
        st.scatter[sa] = w
        st.classify(sa)

        cand, tier, cost = st.row(sa)
        kk = st.pick(np.full(cand.size, sa), cand, tier, cost)
        st.best_tier[sa], st.best_cost[sa], st.best_slot[sa] = tier[kk], cost[kk], cand[kk]
        cid = n + step
        for pos, j in enumerate(cand):
            j = int(j)
            if st.best_slot[j] == sa or st.best_slot[j] == sb:
                st.refresh(j)
                continue
            jid = int(st.ids[j])
            pid = int(st.ids[st.best_slot[j]])
            if _less(
                int(tier[pos]), float(cost[pos]), min(jid, cid), max(jid, cid),
                int(st.best_tier[j]), float(st.best_cost[j]), min(jid, pid), max(jid, pid),
            ):
                st.best_tier[j] = tier[pos]
                st.best_cost[j] = cost[pos]
                st.best_slot[j] = sa
    return left, right, costs, tiers
