"""Compiled slot loop for the DP-driven policies.

Mirrors ``Simulator._step`` for ``relaxed`` and ``index`` exactly, including
the order in which uniforms are consumed, so both paths give identical
metrics for the same seed. Uniforms come from a pre-drawn buffer that the
Python side refills.
"""

import numba
import numpy as np

OK = 0
NEED_UNIFORMS = 1
NEED_SPACE = 2
CAP_VIOLATION = -1
PARTITION_VIOLATION = -2


@numba.njit(cache=True)
def _poisson(u, lam):
    if lam <= 0.0:
        return 0
    p = np.exp(-lam)
    cdf = p
    k = 0
    while u > cdf and p > 0.0:
        k += 1
        p *= lam / k
        cdf += p
    return k


@numba.njit(cache=True)
def _popcount(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@numba.njit(cache=True)
def run_slots(
    n_slots, slot0, index_policy, count_source, check_inv,
    n_nodes, f_src, f_rate, f_deadline, link_id, l_rel, l_cap,
    val, recv, sub,
    pk_uid, pk_flow, pk_born, pk_rem, pk_nh, pk_h, pk_m, pk_settled, pk_recv, counters,
    u, delivered, sent, demand, hist, max_usage, arrivals, info,
):
    """Advance up to ``n_slots`` slots. Returns (slots done, status).

    ``counters`` holds [n_live, next_uid, uniform position]. On NEED_* the
    slot in progress has not touched any state; on a negative status ``info``
    holds (slot, link or packet uid).
    """
    full = (1 << n_nodes) - 1
    n_flows = f_src.shape[0]
    n_links = l_rel.shape[0]
    cap_pk = pk_uid.shape[0]
    hmax = hist.shape[1] - 1
    usage = np.zeros(n_links, dtype=np.int64)
    ks = np.zeros(n_flows, dtype=np.int64)
    for done in range(n_slots):
        slot = slot0 + done
        n_live = counters[0]
        pos = counters[2]
        if u.shape[0] - pos < n_flows:
            return done, NEED_UNIFORMS
        # peek at the arrivals so a shortfall leaves the state untouched
        total = 0
        for f in range(n_flows):
            ks[f] = _poisson(u[pos + f], f_rate[f])
            total += ks[f]
        if n_live + total > cap_pk:
            info[0] = n_live + total
            return done, NEED_SPACE
        if u.shape[0] - pos < n_flows + (n_live + total) * n_nodes:
            return done, NEED_UNIFORMS
        pos += n_flows

        for f in range(n_flows):
            k = ks[f]
            arrivals[f] += k
            src = f_src[f]
            for _ in range(k):
                p = n_live
                n_live += 1
                pk_uid[p] = counters[1]
                counters[1] += 1
                pk_flow[p] = f
                pk_born[p] = slot
                pk_rem[p] = f_deadline[f]
                pk_recv[p] = 1 << src
                if full == (1 << src):
                    pk_nh[p] = 0
                    pk_settled[p] = full
                else:
                    pk_nh[p] = 1
                    pk_h[p, 0] = src
                    pk_m[p, 0] = full
                    pk_settled[p] = 0
                if count_source:
                    delivered[src, f] += 1

        # gather candidate transmissions
        n_cand = 0
        for p in range(n_live):
            n_cand += pk_nh[p]
        c_lid = np.empty(n_cand, dtype=np.int64)
        c_p = np.empty(n_cand, dtype=np.int64)
        c_r = np.empty(n_cand, dtype=np.int64)
        c_rx = np.empty(n_cand, dtype=np.int64)
        c_sub = np.empty(n_cand, dtype=np.int64)
        c_w = np.empty(n_cand, dtype=np.float64)
        n_cand = 0
        for p in range(n_live):
            f = pk_flow[p]
            tau = pk_rem[p]
            for r in range(pk_nh[p]):
                h = pk_h[p, r]
                mask = pk_m[p, r]
                m = recv[f, tau, h, mask]
                if m < 0:
                    continue
                lid = link_id[h, m]
                w = val[f, tau, h, mask]
                if index_policy:
                    if not w > 0.0:
                        continue
                    demand[lid, f] += 1
                c_lid[n_cand] = lid
                c_p[n_cand] = p
                c_r[n_cand] = r
                c_rx[n_cand] = m
                c_sub[n_cand] = sub[f, tau, h, mask]
                c_w[n_cand] = w
                n_cand += 1

        # stable bucket by link; within a link candidates are in uid order
        start = np.zeros(n_links + 1, dtype=np.int64)
        for i in range(n_cand):
            start[c_lid[i] + 1] += 1
        for l in range(n_links):
            start[l + 1] += start[l]
        fill = start[:-1].copy()
        order = np.empty(n_cand, dtype=np.int64)
        for i in range(n_cand):
            l = c_lid[i]
            order[fill[l]] = i
            fill[l] += 1

        chosen = np.empty(n_cand, dtype=np.int64)
        n_att = 0
        for l in range(n_links):
            a, b = start[l], start[l + 1]
            if a == b:
                continue
            if index_policy:
                # descending W, then earlier arrival, then lower uid
                for i in range(a + 1, b):
                    x = order[i]
                    j = i - 1
                    while j >= a:
                        y = order[j]
                        if (c_w[y] < c_w[x]) or (
                            c_w[y] == c_w[x]
                            and (pk_born[c_p[y]] > pk_born[c_p[x]]
                                 or (pk_born[c_p[y]] == pk_born[c_p[x]] and pk_uid[c_p[y]] > pk_uid[c_p[x]]))
                        ):
                            order[j + 1] = y
                            j -= 1
                        else:
                            break
                    order[j + 1] = x
                take = min(b - a, l_cap[l])
                s0 = n_att
                for i in range(a, a + take):
                    chosen[n_att] = order[i]
                    n_att += 1
                # back to uid order for the Bernoulli draws
                for i in range(s0 + 1, n_att):
                    x = chosen[i]
                    j = i - 1
                    while j >= s0 and pk_uid[c_p[chosen[j]]] > pk_uid[c_p[x]]:
                        chosen[j + 1] = chosen[j]
                        j -= 1
                    chosen[j + 1] = x
            else:
                for i in range(a, b):
                    chosen[n_att] = order[i]
                    n_att += 1

        usage[:] = 0
        touched = np.zeros(n_live, dtype=np.bool_)
        for t in range(n_att):
            i = chosen[t]
            lid = c_lid[i]
            p = c_p[i]
            f = pk_flow[p]
            sent[lid, f] += 1
            if not index_policy:
                demand[lid, f] += 1
            usage[lid] += 1
            x = u[pos]
            pos += 1
            if x < l_rel[lid]:
                s = c_sub[i]
                rx = c_rx[i]
                pk_m[p, c_r[i]] &= ~s
                q = pk_nh[p]
                pk_h[p, q] = rx
                pk_m[p, q] = s
                pk_nh[p] = q + 1
                touched[p] = True
                if not (pk_recv[p] >> rx) & 1:
                    pk_recv[p] |= 1 << rx
                    delivered[rx, f] += 1
        for p in range(n_live):
            if touched[p]:
                q = 0
                for r in range(pk_nh[p]):
                    h = pk_h[p, r]
                    mask = pk_m[p, r]
                    if mask == (1 << h):
                        pk_settled[p] |= mask
                    else:
                        pk_h[p, q] = h
                        pk_m[p, q] = mask
                        q += 1
                pk_nh[p] = q

        for l in range(n_links):
            c = usage[l]
            hist[l, min(c, hmax)] += 1
            if c > max_usage[l]:
                max_usage[l] = c
            if index_policy and c > l_cap[l]:
                info[0] = slot
                info[1] = l
                counters[2] = pos
                return done, CAP_VIOLATION

        # age and drop expired packets, keeping uid order
        w_ = 0
        for p in range(n_live):
            rem = pk_rem[p] - 1
            if rem <= 0:
                continue
            if w_ != p:
                pk_uid[w_] = pk_uid[p]
                pk_flow[w_] = pk_flow[p]
                pk_born[w_] = pk_born[p]
                pk_nh[w_] = pk_nh[p]
                for r in range(pk_nh[p]):
                    pk_h[w_, r] = pk_h[p, r]
                    pk_m[w_, r] = pk_m[p, r]
                pk_settled[w_] = pk_settled[p]
                pk_recv[w_] = pk_recv[p]
            pk_rem[w_] = rem
            w_ += 1
        n_live = w_

        if check_inv:
            for p in range(n_live):
                union = pk_settled[p]
                size = _popcount(union)
                bad = False
                for r in range(pk_nh[p]):
                    h = pk_h[p, r]
                    mask = pk_m[p, r]
                    if not (mask >> h) & 1:
                        bad = True
                    union |= mask
                    size += _popcount(mask)
                if bad or union != full or size != n_nodes:
                    info[0] = slot
                    info[1] = pk_uid[p]
                    counters[0] = n_live
                    counters[2] = pos
                    return done, PARTITION_VIOLATION

        counters[0] = n_live
        counters[2] = pos
    return n_slots, OK
