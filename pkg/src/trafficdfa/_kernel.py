"""Compiled simulation engine.

Mirrors the Python engine in :mod:`trafficdfa.traffic` draw for draw: the
same random numbers are consumed in the same order, with identical float
expressions, so both engines produce bit-identical series for the same seed.
Any change to the stepping or routing logic must be made in both places; the
engine-parity tests enforce agreement.

Queues are per-node ring buffers of int64-encoded packets
(``birth * n + destination``) that double in capacity when full.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from numba.typed import List

TIE_TOL = 1e-12


@njit(cache=True)
def _push(bufs, heads, sizes, node, pkt):
    buf = bufs[node]
    cap = len(buf)
    if sizes[node] == cap:
        new = np.empty(2 * cap, np.int64)
        h = heads[node]
        for k in range(cap):
            idx = h + k
            if idx >= cap:
                idx -= cap
            new[k] = buf[idx]
        bufs[node] = new
        heads[node] = 0
        buf = new
        cap = 2 * cap
    pos = heads[node] + sizes[node]
    if pos >= cap:
        pos -= cap
    buf[pos] = pkt
    sizes[node] += 1


@njit(cache=True)
def _rand_index(rng, k):
    r = int(rng.random() * k)
    if r >= k:
        r = k - 1
    return r


@njit(cache=True)
def run_sim(
    indptr,
    indices,
    dist,
    toward,
    cap_base,
    cap_frac,
    create_base,
    create_frac,
    any_create,
    strategy_code,
    h,
    invcap,
    steps,
    n,
    rng,
):
    bufs = List()
    for _ in range(n):
        bufs.append(np.empty(8, np.int64))
    heads = np.zeros(n, np.int64)
    sizes = np.zeros(n, np.int64)

    staged_cap = 4096
    staged_hop = np.empty(staged_cap, np.int64)
    staged_pkt = np.empty(staged_cap, np.int64)

    nstart = np.zeros(n, np.int64)
    scores = np.zeros(n, np.float64)

    inflow = np.zeros(n, np.int64)
    series = np.empty(steps, np.float64)
    created_total = 0
    delivered_total = 0
    h1 = 1.0 - h

    for t in range(steps):
        # phase 1: forwarding, observing start-of-step queue lengths
        for i in range(n):
            nstart[i] = sizes[i]
        n_staged = 0
        for i in range(n):
            if sizes[i] == 0:
                continue
            cap = cap_base[i]
            if cap_frac[i] > 0.0:
                if rng.random() < cap_frac[i]:
                    cap += 1
            npop = cap if cap < sizes[i] else sizes[i]
            lo = indptr[i]
            hi = indptr[i + 1]
            for _ in range(npop):
                buf = bufs[i]
                pkt = buf[heads[i]]
                heads[i] += 1
                if heads[i] == len(buf):
                    heads[i] = 0
                sizes[i] -= 1
                dest = pkt % n

                if strategy_code == 0:
                    # minimal-hop routing with uniform tie choice
                    target = dist[dest, i] - 1
                    count = 0
                    hop = -1
                    for e in range(lo, hi):
                        l = indices[e]
                        if dist[dest, l] == target:
                            count += 1
                            hop = l
                    if count > 1:
                        r = _rand_index(rng, count)
                        c = 0
                        for e in range(lo, hi):
                            l = indices[e]
                            if dist[dest, l] == target:
                                if c == r:
                                    hop = l
                                    break
                                c += 1
                else:
                    deg_i = hi - lo
                    if strategy_code == 1:
                        for e in range(lo, hi):
                            l = indices[e]
                            scores[e - lo] = h * np.float64(dist[dest, l]) + h1 * (
                                np.float64(nstart[l]) * invcap[l]
                            )
                    else:
                        for e in range(lo, hi):
                            l = indices[e]
                            tot = 0.0
                            s = np.int64(l)
                            while s != dest:
                                tot += np.float64(nstart[s]) * invcap[s]
                                s = np.int64(toward[dest, s])
                            scores[e - lo] = tot
                    vmin = scores[0]
                    for e in range(1, deg_i):
                        if scores[e] < vmin:
                            vmin = scores[e]
                    thr = vmin + TIE_TOL
                    n_ties = 0
                    dmin = np.int64(32767)
                    hop = -1
                    for e in range(deg_i):
                        if scores[e] <= thr:
                            n_ties += 1
                            hop = indices[lo + e]
                            d = np.int64(dist[dest, indices[lo + e]])
                            if d < dmin:
                                dmin = d
                    if n_ties > 1:
                        n_ties = 0
                        for e in range(deg_i):
                            if scores[e] <= thr:
                                l = indices[lo + e]
                                if np.int64(dist[dest, l]) == dmin:
                                    n_ties += 1
                                    hop = l
                        if n_ties > 1:
                            r = _rand_index(rng, n_ties)
                            c = 0
                            for e in range(deg_i):
                                if scores[e] <= thr:
                                    l = indices[lo + e]
                                    if np.int64(dist[dest, l]) == dmin:
                                        if c == r:
                                            hop = l
                                            break
                                        c += 1

                if hop == dest:
                    delivered_total += 1
                else:
                    if n_staged == staged_cap:
                        staged_cap *= 2
                        nh = np.empty(staged_cap, np.int64)
                        npk = np.empty(staged_cap, np.int64)
                        nh[:n_staged] = staged_hop
                        npk[:n_staged] = staged_pkt
                        staged_hop = nh
                        staged_pkt = npk
                    staged_hop[n_staged] = hop
                    staged_pkt[n_staged] = pkt
                    n_staged += 1

        # phase 2: staged arrivals land at queue tails in staging order
        for s in range(n_staged):
            hop = staged_hop[s]
            _push(bufs, heads, sizes, hop, staged_pkt[s])
            inflow[hop] += 1

        # phase 3: packet creation
        if any_create:
            u = rng.random(n)
            for i in range(n):
                c = create_base[i]
                if u[i] < create_frac[i]:
                    c += 1
                for _ in range(c):
                    r = _rand_index(rng, n - 1)
                    if r >= i:
                        r += 1
                    _push(bufs, heads, sizes, i, t * n + r)
                created_total += c
                inflow[i] += c
        else:
            for i in range(n):
                c = create_base[i]
                for _ in range(c):
                    r = _rand_index(rng, n - 1)
                    if r >= i:
                        r += 1
                    _push(bufs, heads, sizes, i, t * n + r)
                created_total += c
                inflow[i] += c

        series[t] = (created_total - delivered_total) / n

    return series, inflow, created_total, delivered_total
